//! Incremental regular (weighted Delaunay) triangulation in the plane.
//!
//! Triangles are stored counter-clockwise with `n[i]` the neighbor across the
//! edge opposite `v[i]`. The convex hull is closed off by ghost triangles that
//! share the vertex [`GHOST`], so every finite edge has two neighbors. A ghost
//! triangle whose finite edge runs `x → y` conflicts with points strictly to
//! the left of that directed edge.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::predicates::{orient2d, power_test};
use super::{ParaboloidApex, WeightedPoint, MAX_DIM};
use crate::error::{Error, Result};

const GHOST: usize = usize::MAX;
const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug)]
struct Tri {
    v: [usize; 3],
    n: [usize; 3],
    alive: bool,
}

impl Tri {
    fn ghost_slot(&self) -> Option<usize> {
        self.v.iter().position(|&x| x == GHOST)
    }
}

/// Regular triangulation of a weighted point set together with the apex of
/// every simplex.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualTessellation {
    pub d: usize,
    pub sites: Vec<WeightedPoint>,
    /// Counter-clockwise site triples.
    pub simplices: Vec<[usize; 3]>,
    pub apices: Vec<ParaboloidApex>,
    /// Neighbor across the edge opposite each vertex; `None` on the hull.
    pub adjacency: Vec<[Option<usize>; 3]>,
    /// Sites whose lifted point is not on the lower hull.
    pub redundant: Vec<bool>,
}

impl DualTessellation {
    pub fn simplex_points(&self, s: usize) -> [WeightedPoint; 3] {
        self.simplices[s].map(|i| self.sites[i])
    }

    /// For every site, its incident simplices in counter-clockwise order. The
    /// flag is true when the star is closed (site off the hull).
    pub fn stars(&self) -> Vec<(Vec<usize>, bool)> {
        let mut first = vec![NONE; self.sites.len()];
        for (t, s) in self.simplices.iter().enumerate() {
            for &v in s {
                if first[v] == NONE {
                    first[v] = t;
                }
            }
        }
        (0..self.sites.len())
            .map(|site| {
                if first[site] == NONE {
                    return (Vec::new(), false);
                }
                self.star_from(site, first[site])
            })
            .collect()
    }

    fn star_from(&self, site: usize, start: usize) -> (Vec<usize>, bool) {
        let pos = |t: usize| self.simplices[t].iter().position(|&v| v == site).unwrap();
        // Rewind clockwise to the hull if the star is open.
        let mut t = start;
        loop {
            let i = pos(t);
            match self.adjacency[t][(i + 2) % 3] {
                Some(prev) if prev != start => t = prev,
                Some(_) => {
                    t = start;
                    break;
                }
                None => break,
            }
        }
        let begin = t;
        let mut out = vec![begin];
        loop {
            let i = pos(t);
            match self.adjacency[t][(i + 1) % 3] {
                Some(next) if next == begin => return (out, true),
                Some(next) => {
                    out.push(next);
                    t = next;
                }
                None => return (out, false),
            }
        }
    }

    /// Unordered site pairs joined by a triangulation edge.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::with_capacity(self.simplices.len() * 3 / 2 + 3);
        for (t, s) in self.simplices.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (s[(i + 1) % 3], s[(i + 2) % 3]);
                match self.adjacency[t][i] {
                    Some(o) if o < t => {}
                    _ => e.push((a.min(b), a.max(b))),
                }
            }
        }
        e.sort_unstable();
        e
    }

    /// Largest `|pow(w, site) − t|` over simplex vertices, relative to
    /// `1 + |t|`.
    pub fn max_apex_residual(&self) -> f64 {
        self.simplices
            .iter()
            .zip(&self.apices)
            .map(|(s, a)| {
                s.iter()
                    .map(|&i| (super::pow(&a.w[..2], &self.sites[i]) - a.t).abs() / (1.0 + a.t.abs()))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Apex of a planar triangle, solved relative to its third vertex.
pub fn apex2(a: &WeightedPoint, b: &WeightedPoint, c: &WeightedPoint) -> ParaboloidApex {
    let (ax, ay) = (a.v[0] - c.v[0], a.v[1] - c.v[1]);
    let (bx, by) = (b.v[0] - c.v[0], b.v[1] - c.v[1]);
    let ra = ax * ax + ay * ay + (a.h - c.h);
    let rb = bx * bx + by * by + (b.h - c.h);
    let det = 2.0 * (ax * by - ay * bx);
    let ux = (ra * by - rb * ay) / det;
    let uy = (ax * rb - bx * ra) / det;
    let mut w = [0.0; MAX_DIM];
    w[0] = c.v[0] + ux;
    w[1] = c.v[1] + uy;
    ParaboloidApex {
        w,
        t: ux * ux + uy * uy + c.h,
    }
}

/// Builds the regular triangulation of `points`. Only `d = 2` is supported.
pub fn build_regular_triangulation(points: &[WeightedPoint], d: usize) -> Result<DualTessellation> {
    if d != 2 {
        return Err(Error::Unsupported(format!("regular triangulation in dimension {d}")));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("site {i} has a non-finite coordinate")));
    }
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("{} sites, at least 3 needed", points.len())));
    }
    let mut b = Builder::new(points);
    b.run()?;
    Ok(b.finish())
}

struct Builder<'a> {
    pts: Vec<[f64; 3]>,
    sites: &'a [WeightedPoint],
    tris: Vec<Tri>,
    free: Vec<usize>,
    in_tri: Vec<bool>,
    redundant: Vec<bool>,
    last: usize,
    walk_state: u64,
    mark: Vec<u32>,
    epoch: u32,
}

impl<'a> Builder<'a> {
    fn new(sites: &'a [WeightedPoint]) -> Self {
        Self {
            pts: sites.iter().map(|p| p.xyh()).collect(),
            sites,
            tris: Vec::with_capacity(2 * sites.len() + 8),
            free: Vec::new(),
            in_tri: vec![false; sites.len()],
            redundant: vec![false; sites.len()],
            last: 0,
            walk_state: 0x2545_f491_4f6c_dd1d,
            mark: Vec::new(),
            epoch: 0,
        }
    }

    fn xy(&self, i: usize) -> [f64; 2] {
        [self.pts[i][0], self.pts[i][1]]
    }

    fn next_rand(&mut self) -> usize {
        self.walk_state ^= self.walk_state << 13;
        self.walk_state ^= self.walk_state >> 7;
        self.walk_state ^= self.walk_state << 17;
        (self.walk_state % 3) as usize
    }

    fn run(&mut self) -> Result<()> {
        let order = spatial_order(&self.pts);
        // Drop exact spatial duplicates: the sort puts the lowest weight first,
        // and a duplicate with a weight at least as large never owns anything.
        let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
        let mut unique = Vec::with_capacity(order.len());
        for &i in &order {
            // Adding zero folds -0.0 into 0.0.
            let key = ((self.pts[i][0] + 0.0).to_bits(), (self.pts[i][1] + 0.0).to_bits());
            if seen.contains_key(&key) {
                self.redundant[i] = true;
            } else {
                seen.insert(key, i);
                unique.push(i);
            }
        }
        let (a, b) = (unique.first().copied(), unique.get(1).copied());
        let (Some(a), Some(b)) = (a, b) else {
            return Err(Error::Degenerate("fewer than 3 distinct sites".into()));
        };
        let Some(ci) = unique[2..]
            .iter()
            .position(|&c| orient2d(self.xy(a), self.xy(b), self.xy(c)) != Ordering::Equal)
            .map(|k| k + 2)
        else {
            return Err(Error::Degenerate("all sites are collinear".into()));
        };
        let c = unique[ci];
        self.init(a, b, c);
        for (k, &q) in unique.iter().enumerate() {
            if k == 0 || k == 1 || k == ci {
                continue;
            }
            self.insert(q);
        }
        Ok(())
    }

    fn alloc(&mut self, t: Tri) -> usize {
        if let Some(i) = self.free.pop() {
            self.tris[i] = t;
            i
        } else {
            self.tris.push(t);
            self.mark.push(0);
            self.tris.len() - 1
        }
    }

    fn init(&mut self, a: usize, b: usize, c: usize) {
        let (a, b) = if orient2d(self.xy(a), self.xy(b), self.xy(c)) == Ordering::Greater {
            (a, b)
        } else {
            (b, a)
        };
        let shapes = [[a, b, c], [c, b, GHOST], [a, c, GHOST], [b, a, GHOST]];
        let ids: Vec<usize> = shapes
            .iter()
            .map(|&v| {
                self.alloc(Tri {
                    v,
                    n: [NONE; 3],
                    alive: true,
                })
            })
            .collect();
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for &t in &ids {
            for j in 0..3 {
                let v = self.tris[t].v;
                edges.insert((v[(j + 1) % 3], v[(j + 2) % 3]), (t, j));
            }
        }
        for &t in &ids {
            for j in 0..3 {
                let v = self.tris[t].v;
                let (o, _) = edges[&(v[(j + 2) % 3], v[(j + 1) % 3])];
                self.tris[t].n[j] = o;
            }
        }
        for v in [a, b, c] {
            self.in_tri[v] = true;
        }
        self.last = ids[0];
    }

    fn conflict(&self, t: usize, q: usize) -> bool {
        let tri = &self.tris[t];
        let qp = self.pts[q];
        match tri.ghost_slot() {
            None => power_test(self.pts[tri.v[0]], self.pts[tri.v[1]], self.pts[tri.v[2]], qp) == Ordering::Greater,
            Some(k) => {
                let (x, y) = (tri.v[(k + 1) % 3], tri.v[(k + 2) % 3]);
                match orient2d(self.xy(x), self.xy(y), [qp[0], qp[1]]) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => strictly_between(self.xy(x), self.xy(y), [qp[0], qp[1]]) && self.conflict(tri.n[k], q),
                }
            }
        }
    }

    fn locate(&mut self, q: usize) -> usize {
        let qp = self.xy(q);
        let mut t = self.last;
        let limit = 4 * self.tris.len() + 64;
        for _ in 0..limit {
            let tri = self.tris[t];
            if tri.ghost_slot().is_some() {
                return t;
            }
            let r = self.next_rand();
            let mut moved = false;
            for i in 0..3 {
                let j = (r + i) % 3;
                let (a, b) = (tri.v[(j + 1) % 3], tri.v[(j + 2) % 3]);
                if orient2d(self.xy(a), self.xy(b), qp) == Ordering::Less {
                    t = tri.n[j];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return t;
            }
        }
        // The walk failed to settle; scan instead.
        (0..self.tris.len())
            .find(|&t| {
                let tri = &self.tris[t];
                tri.alive
                    && match tri.ghost_slot() {
                        None => (0..3).all(|j| {
                            orient2d(self.xy(tri.v[(j + 1) % 3]), self.xy(tri.v[(j + 2) % 3]), qp) != Ordering::Less
                        }),
                        Some(_) => self.conflict(t, q),
                    }
            })
            .unwrap_or(self.last)
    }

    fn insert(&mut self, q: usize) {
        let start = self.locate(q);
        if !self.conflict(start, q) {
            self.redundant[q] = true;
            return;
        }
        self.epoch += 1;
        let epoch = self.epoch;
        let mut cavity = vec![start];
        self.mark[start] = epoch;
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for j in 0..3 {
                let nb = self.tris[t].n[j];
                if self.mark[nb] != epoch && self.conflict(nb, q) {
                    self.mark[nb] = epoch;
                    cavity.push(nb);
                }
            }
        }

        let mut boundary = Vec::new();
        for &t in &cavity {
            let tri = self.tris[t];
            for j in 0..3 {
                let outside = tri.n[j];
                if self.mark[outside] != epoch {
                    let slot = self.tris[outside].n.iter().position(|&x| x == t).expect("adjacency is symmetric");
                    boundary.push((tri.v[(j + 1) % 3], tri.v[(j + 2) % 3], outside, slot));
                }
            }
        }

        let mut on_boundary: HashMap<usize, ()> = HashMap::with_capacity(boundary.len());
        for &(a, ..) in &boundary {
            on_boundary.insert(a, ());
        }
        for &t in &cavity {
            for v in self.tris[t].v {
                if v != GHOST && !on_boundary.contains_key(&v) && self.in_tri[v] {
                    self.in_tri[v] = false;
                    self.redundant[v] = true;
                }
            }
            self.tris[t].alive = false;
            self.mark[t] = epoch;
        }
        self.free.extend(cavity.iter().copied());

        let mut by_first: HashMap<usize, usize> = HashMap::with_capacity(boundary.len());
        let mut by_second: HashMap<usize, usize> = HashMap::with_capacity(boundary.len());
        let mut created = Vec::with_capacity(boundary.len());
        for &(a, b, outside, slot) in &boundary {
            let id = self.alloc(Tri {
                v: [a, b, q],
                n: [NONE, NONE, outside],
                alive: true,
            });
            self.mark[id] = 0;
            self.tris[outside].n[slot] = id;
            by_first.insert(a, id);
            by_second.insert(b, id);
            created.push(id);
        }
        for &id in &created {
            let [a, b, _] = self.tris[id].v;
            self.tris[id].n[0] = by_first[&b];
            self.tris[id].n[1] = by_second[&a];
        }
        self.in_tri[q] = true;
        self.last = created
            .iter()
            .copied()
            .find(|&t| self.tris[t].ghost_slot().is_none())
            .unwrap_or(self.last);
        if self.tris[self.last].ghost_slot().is_some() || !self.tris[self.last].alive {
            self.last = (0..self.tris.len())
                .find(|&t| self.tris[t].alive && self.tris[t].ghost_slot().is_none())
                .unwrap_or(0);
        }
    }

    fn finish(self) -> DualTessellation {
        let mut id = vec![NONE; self.tris.len()];
        let mut simplices = Vec::new();
        for (t, tri) in self.tris.iter().enumerate() {
            if tri.alive && tri.ghost_slot().is_none() {
                id[t] = simplices.len();
                simplices.push(t);
            }
        }
        let adjacency = simplices
            .iter()
            .map(|&t| self.tris[t].n.map(|o| (id[o] != NONE).then_some(id[o])))
            .collect();
        let tri_v: Vec<[usize; 3]> = simplices.iter().map(|&t| self.tris[t].v).collect();
        let apices = tri_v
            .iter()
            .map(|v| apex2(&self.sites[v[0]], &self.sites[v[1]], &self.sites[v[2]]))
            .collect();
        DualTessellation {
            d: 2,
            sites: self.sites.to_vec(),
            simplices: tri_v,
            apices,
            adjacency,
            redundant: self.redundant,
        }
    }
}

fn strictly_between(x: [f64; 2], y: [f64; 2], q: [f64; 2]) -> bool {
    let axis = if x[0] != y[0] { 0 } else { 1 };
    let (lo, hi) = if x[axis] < y[axis] { (x[axis], y[axis]) } else { (y[axis], x[axis]) };
    lo < q[axis] && q[axis] < hi
}

/// Hilbert-curve order on a 2^16 grid, ties broken by weight then index.
fn spatial_order(pts: &[[f64; 3]]) -> Vec<usize> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let n = 1u32 << 16;
    let cell = |x: f64, k: usize| (((x - lo[k]) / side * (n - 1) as f64).round() as u32).min(n - 1);
    let keys: Vec<u64> = pts.iter().map(|p| hilbert_index(n, cell(p[0], 0), cell(p[1], 1))).collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(pts[a][2].total_cmp(&pts[b][2])).then(a.cmp(&b)));
    order
}

fn hilbert_index(n: u32, mut x: u32, mut y: u32) -> u64 {
    let mut d = 0u64;
    let mut s = n / 2;
    while s > 0 {
        let rx = u32::from(x & s > 0);
        let ry = u32::from(y & s > 0);
        d += u64::from(s) * u64::from(s) * u64::from((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{below_paraboloid_predicate, brute_force_cell_of, Side};
    use rand::{Rng, SeedableRng};

    fn wp(x: f64, y: f64, h: f64) -> WeightedPoint {
        WeightedPoint::new(&[x, y], h)
    }

    fn area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    }

    fn hull_area(pts: &[WeightedPoint]) -> f64 {
        let mut p: Vec<[f64; 2]> = pts.iter().map(|s| s.xy()).collect();
        p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        p.dedup();
        let mut h: Vec<[f64; 2]> = Vec::new();
        for pass in 0..2 {
            let start = h.len();
            let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
            for &q in iter {
                while h.len() >= start + 2 && area(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
                    h.pop();
                }
                h.push(q);
            }
            h.pop();
        }
        (1..h.len() - 1).map(|i| area(h[0], h[i], h[i + 1])).sum()
    }

    /// Every simplex is empty, positively oriented, covers the hull, and
    /// redundant sites lie on or below some simplex paraboloid.
    fn check(dt: &DualTessellation) {
        let mut total = 0.0;
        for (k, s) in dt.simplices.iter().enumerate() {
            let pts = dt.simplex_points(k);
            let a = area(pts[0].xy(), pts[1].xy(), pts[2].xy());
            assert!(a > 0.0);
            total += a;
            for (i, q) in dt.sites.iter().enumerate() {
                if s.contains(&i) {
                    continue;
                }
                assert_ne!(below_paraboloid_predicate(&pts, q, 2).unwrap(), Side::Inside, "site {i} inside simplex {k}");
            }
            for (j, nb) in dt.adjacency[k].iter().enumerate() {
                if let Some(o) = nb {
                    assert!(dt.adjacency[*o].contains(&Some(k)));
                    let opp = dt.simplices[*o].iter().find(|v| !s.contains(v)).copied().unwrap();
                    assert_ne!(opp, s[j]);
                }
            }
        }
        let h = hull_area(&dt.sites.iter().zip(&dt.redundant).filter(|(_, r)| !**r).map(|(p, _)| *p).collect::<Vec<_>>());
        assert!((total - h).abs() <= 1e-9 * h.max(1.0), "area {total} vs hull {h}");
        let used: std::collections::HashSet<usize> = dt.simplices.iter().flatten().copied().collect();
        for i in 0..dt.sites.len() {
            assert_eq!(used.contains(&i), !dt.redundant[i], "site {i}");
        }
        assert!(dt.max_apex_residual() <= 1e-9);
    }

    fn random_sites(n: usize, seed: u64, spread: f64) -> Vec<WeightedPoint> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| wp(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), spread * rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn sorted(dt: &DualTessellation) -> Vec<[usize; 3]> {
        let mut s: Vec<[usize; 3]> = dt
            .simplices
            .iter()
            .map(|t| {
                let mut t = *t;
                t.sort_unstable();
                t
            })
            .collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn three_points() {
        let dt = build_regular_triangulation(&[wp(0.0, 0.0, 0.0), wp(1.0, 0.0, 0.0), wp(0.0, 1.0, 0.0)], 2).unwrap();
        assert_eq!(dt.simplices.len(), 1);
        assert!((dt.apices[0].w[0] - 0.5).abs() < 1e-15 && (dt.apices[0].t - 0.5).abs() < 1e-15);
        check(&dt);
    }

    #[test]
    fn four_points_delaunay() {
        // The short diagonal 1-3 is the Delaunay edge.
        let pts = [wp(0.0, 0.0, 0.0), wp(2.0, -0.4, 0.0), wp(4.0, 0.0, 0.0), wp(2.0, 0.4, 0.0)];
        let dt = build_regular_triangulation(&pts, 2).unwrap();
        assert_eq!(sorted(&dt), vec![[0, 1, 3], [1, 2, 3]]);
        check(&dt);
    }

    #[test]
    fn random_weighted_sites() {
        for seed in 0..20 {
            for spread in [0.0, 0.01, 0.1] {
                let dt = build_regular_triangulation(&random_sites(50, seed, spread), 2).unwrap();
                check(&dt);
            }
        }
    }

    #[test]
    fn heavy_site_is_redundant() {
        let mut pts = random_sites(50, 9, 0.01);
        pts.push(wp(0.5, 0.5, 10.0));
        let dt = build_regular_triangulation(&pts, 2).unwrap();
        assert!(dt.redundant[50]);
        check(&dt);
        let mut owned = false;
        for i in 0..=40 {
            for j in 0..=40 {
                let w = [i as f64 / 40.0, j as f64 / 40.0];
                owned |= brute_force_cell_of(&w, &pts).unwrap().index == 50;
            }
        }
        assert!(!owned);
    }

    #[test]
    fn light_site_evicts_neighbors() {
        let mut pts = random_sites(200, 4, 0.0);
        pts.push(wp(0.5, 0.5, -0.05));
        let dt = build_regular_triangulation(&pts, 2).unwrap();
        assert!(dt.redundant.iter().filter(|r| **r).count() > 3);
        check(&dt);
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let pts = random_sites(300, 2, 0.0);
        let shifted: Vec<WeightedPoint> = pts.iter().map(|p| wp(p.v[0], p.v[1], 3.5)).collect();
        let a = build_regular_triangulation(&pts, 2).unwrap();
        let b = build_regular_triangulation(&shifted, 2).unwrap();
        assert_eq!(sorted(&a), sorted(&b));
        assert!(a.redundant.iter().all(|r| !r));
    }

    #[test]
    fn lattice_and_duplicates() {
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                pts.push(wp(i as f64, j as f64, 0.0));
            }
        }
        pts.push(wp(3.0, 3.0, 0.5));
        pts.push(wp(4.0, 4.0, -0.25));
        let dt = build_regular_triangulation(&pts, 2).unwrap();
        check(&dt);
        assert!(dt.redundant[64]);
        assert!(dt.redundant[36]);
        assert!(!dt.redundant[65]);
    }

    #[test]
    fn collinear_input_is_rejected() {
        let pts: Vec<WeightedPoint> = (0..5).map(|i| wp(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(build_regular_triangulation(&pts, 2), Err(Error::Degenerate(_))));
        assert!(matches!(build_regular_triangulation(&pts, 3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn stars_are_ordered() {
        let dt = build_regular_triangulation(&random_sites(100, 5, 0.02), 2).unwrap();
        for (site, (star, closed)) in dt.stars().iter().enumerate() {
            if dt.redundant[site] {
                assert!(star.is_empty());
                continue;
            }
            for w in star.windows(2) {
                let shared = dt.simplices[w[0]].iter().filter(|v| dt.simplices[w[1]].contains(v)).count();
                assert_eq!(shared, 2);
            }
            if *closed {
                let turn: f64 = star
                    .iter()
                    .map(|&t| {
                        let s = dt.simplices[t];
                        let i = s.iter().position(|&v| v == site).unwrap();
                        let (p, a, b) = (dt.sites[site].xy(), dt.sites[s[(i + 1) % 3]].xy(), dt.sites[s[(i + 2) % 3]].xy());
                        let ang = |q: [f64; 2]| (q[1] - p[1]).atan2(q[0] - p[0]);
                        let mut d = ang(b) - ang(a);
                        if d < 0.0 {
                            d += std::f64::consts::TAU;
                        }
                        d
                    })
                    .sum();
                assert!((turn - std::f64::consts::TAU).abs() < 1e-9);
            }
        }
    }
}
