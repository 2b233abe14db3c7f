//! Kd-tree over sites answering power-distance queries. Each node stores its
//! bounding box and the smallest weight below it, so `dist²(w, box) + min h`
//! bounds the power of every site in the subtree.

use super::{pow, WeightedPoint, MAX_DIM};

const LEAF: usize = 8;

struct Node {
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
    min_h: f64,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

pub struct PowerIndex<'a> {
    sites: &'a [WeightedPoint],
    d: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> PowerIndex<'a> {
    pub fn new(sites: &'a [WeightedPoint], d: usize) -> Self {
        let mut idx = Self {
            sites,
            d,
            order: (0..sites.len()).collect(),
            nodes: Vec::new(),
        };
        if !sites.is_empty() {
            idx.build(0, sites.len());
        }
        idx
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let d = self.d;
        let mut lo = [f64::INFINITY; MAX_DIM];
        let mut hi = [f64::NEG_INFINITY; MAX_DIM];
        let mut min_h = f64::INFINITY;
        for &i in &self.order[start..end] {
            let s = &self.sites[i];
            for k in 0..d {
                lo[k] = lo[k].min(s.v[k]);
                hi[k] = hi[k].max(s.v[k]);
            }
            min_h = min_h.min(s.h);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            min_h,
            start,
            end,
            children: None,
        });
        if end - start > LEAF {
            let axis = (0..d).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
            let mid = (start + end) / 2;
            let sites = self.sites;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| sites[a].v[axis].total_cmp(&sites[b].v[axis]));
            let l = self.build(start, mid);
            let r = self.build(mid, end);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    fn bound(&self, node: &Node, w: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.d {
            let x = w[k];
            let gap = if x < node.lo[k] {
                node.lo[k] - x
            } else if x > node.hi[k] {
                x - node.hi[k]
            } else {
                0.0
            };
            s += gap * gap;
        }
        s + node.min_h
    }

    pub fn sites(&self) -> &'a [WeightedPoint] {
        self.sites
    }

    /// Site of minimal power at `w` and that power. Ties resolve to the lowest
    /// index.
    pub fn nearest(&self, w: &[f64]) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_in(0, w, &mut best);
        Some(best)
    }

    fn nearest_in(&self, id: usize, w: &[f64], best: &mut (usize, f64)) {
        let node = &self.nodes[id];
        if self.bound(node, w) > best.1 {
            return;
        }
        match node.children {
            None => {
                for &i in &self.order[node.start..node.end] {
                    let p = pow(&w[..self.d], &self.sites[i]);
                    if p < best.1 || (p == best.1 && i < best.0) {
                        *best = (i, p);
                    }
                }
            }
            Some((l, r)) => {
                let (bl, br) = (self.bound(&self.nodes[l], w), self.bound(&self.nodes[r], w));
                let (first, second) = if bl <= br { (l, r) } else { (r, l) };
                self.nearest_in(first, w, best);
                self.nearest_in(second, w, best);
            }
        }
    }

    /// Indices of all sites with `pow(w, ·) ≤ level`, in increasing order.
    pub fn within(&self, w: &[f64], level: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.within_in(0, w, level, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_in(&self, id: usize, w: &[f64], level: f64, out: &mut Vec<usize>) {
        let node = &self.nodes[id];
        if self.bound(node, w) > level {
            return;
        }
        match node.children {
            None => out.extend(
                self.order[node.start..node.end]
                    .iter()
                    .copied()
                    .filter(|&i| pow(&w[..self.d], &self.sites[i]) <= level),
            ),
            Some((l, r)) => {
                self.within_in(l, w, level, out);
                self.within_in(r, w, level, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::brute_force_cell_of;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            let sites: Vec<WeightedPoint> = (0..500)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                    WeightedPoint::new(&v, rng.random_range(-1.0..1.0))
                })
                .collect();
            let index = PowerIndex::new(&sites, d);
            for _ in 0..500 {
                let w: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                let (i, p) = index.nearest(&w).unwrap();
                assert_eq!(i, brute_force_cell_of(&w, &sites).unwrap().index);
                assert_eq!(p, pow(&w, &sites[i]));
                let level = p + 0.3;
                let expect: Vec<usize> = (0..sites.len()).filter(|&j| pow(&w, &sites[j]) <= level).collect();
                assert_eq!(index.within(&w, level), expect);
            }
        }
    }

    #[test]
    fn empty_index() {
        let index = PowerIndex::new(&[], 2);
        assert!(index.nearest(&[0.0, 0.0]).is_none());
        assert!(index.within(&[0.0, 0.0], 1.0).is_empty());
    }
}
