//! Power function, paraboloid apices, polar lifting and the regular
//! triangulation.

pub mod index;
pub mod predicates;
pub mod triangulation;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use index::PowerIndex;
pub use triangulation::{build_regular_triangulation, DualTessellation};

/// Largest spatial dimension carried by [`WeightedPoint`].
pub const MAX_DIM: usize = 3;

/// A site `(v, h)`. Unused trailing coordinates are zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub v: [f64; MAX_DIM],
    pub h: f64,
}

impl WeightedPoint {
    pub fn new(v: &[f64], h: f64) -> Self {
        assert!(v.len() <= MAX_DIM, "dimension {} exceeds {MAX_DIM}", v.len());
        let mut c = [0.0; MAX_DIM];
        c[..v.len()].copy_from_slice(v);
        Self { v: c, h }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.v[0], self.v[1]]
    }

    pub fn xyh(&self) -> [f64; 3] {
        [self.v[0], self.v[1], self.h]
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.v.iter().all(|x| x.is_finite())
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `‖w − v‖² + h`, over the first `w.len()` coordinates.
pub fn pow(w: &[f64], p: &WeightedPoint) -> f64 {
    dist2(w, &p.v[..w.len()]) + p.h
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaboloidApex {
    pub w: [f64; MAX_DIM],
    pub t: f64,
}

impl ParaboloidApex {
    /// Height of the paraboloid `t − ‖v − w‖²` above `v`.
    pub fn height_at(&self, v: &[f64]) -> f64 {
        self.t - dist2(v, &self.w[..v.len()])
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting. Returns
/// `None` for a numerically singular system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(piv, col);
        b.swap(piv, col);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Apex of the unique downward paraboloid through `d + 1` weighted points.
pub fn apex_of(points: &[WeightedPoint], d: usize) -> Result<ParaboloidApex> {
    if d == 0 || d > MAX_DIM || points.len() != d + 1 {
        return Err(Error::Degenerate(format!("apex needs {} points in dimension {d}", d + 1)));
    }
    let last = &points[d];
    let n2 = |p: &WeightedPoint| p.v[..d].iter().map(|x| x * x).sum::<f64>();
    let a: Vec<Vec<f64>> = points[..d].iter().map(|p| (0..d).map(|k| 2.0 * (p.v[k] - last.v[k])).collect()).collect();
    let b: Vec<f64> = points[..d].iter().map(|p| p.h - last.h + n2(p) - n2(last)).collect();
    let w = solve(a, b).ok_or_else(|| Error::Degenerate("spatial coordinates are affinely dependent".into()))?;
    let mut apex = ParaboloidApex {
        w: [0.0; MAX_DIM],
        t: 0.0,
    };
    apex.w[..d].copy_from_slice(&w);
    apex.t = pow(&apex.w[..d], &points[0]);
    let scale = 1.0 + apex.t.abs() + points.iter().map(|p| n2(p) + p.h.abs()).fold(0.0, f64::max);
    let residual = apex_residual(&apex, points, d);
    if !(residual <= 1e-9 * scale) {
        return Err(Error::Degenerate(format!("apex residual {residual:e} exceeds tolerance")));
    }
    Ok(apex)
}

/// Largest `|h_i + ‖v_i − w‖² − t|` over the points.
pub fn apex_residual(apex: &ParaboloidApex, points: &[WeightedPoint], d: usize) -> f64 {
    points.iter().map(|p| (pow(&apex.w[..d], p) - apex.t).abs()).fold(0.0, f64::max)
}

/// Epigraph of the polar hyperplane `y_{d+1} = 2⟨v, y⟩ − ‖v‖² − h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftedHalfspace {
    pub normal: [f64; MAX_DIM],
    pub offset: f64,
    pub d: usize,
}

impl LiftedHalfspace {
    pub fn height_at(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.normal).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }

    /// Vertical distance from the lifted point `(w, ‖w‖²)` down to the plane.
    pub fn vertical_distance(&self, w: &[f64]) -> f64 {
        w.iter().map(|x| x * x).sum::<f64>() - self.height_at(w)
    }
}

pub fn lift(p: &WeightedPoint, d: usize) -> LiftedHalfspace {
    let mut normal = [0.0; MAX_DIM];
    for k in 0..d {
        normal[k] = 2.0 * p.v[k];
    }
    LiftedHalfspace {
        normal,
        offset: p.v[..d].iter().map(|x| x * x).sum::<f64>() + p.h,
        d,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Inside,
    On,
    Outside,
}

impl Side {
    fn from_inside_sign(s: Ordering) -> Self {
        match s {
            Ordering::Greater => Side::Inside,
            Ordering::Equal => Side::On,
            Ordering::Less => Side::Outside,
        }
    }
}

/// Position of `q` relative to the downward paraboloid through the simplex
/// points: `Inside` means strictly below it.
pub fn below_paraboloid_predicate(simplex: &[WeightedPoint], q: &WeightedPoint, d: usize) -> Result<Side> {
    if d == 0 || d > MAX_DIM || simplex.len() != d + 1 {
        return Err(Error::Degenerate(format!("predicate needs {} points in dimension {d}", d + 1)));
    }
    let orient = orientation(simplex, d);
    if orient == Ordering::Equal {
        return Err(Error::Degenerate("simplex spatial coordinates are affinely dependent".into()));
    }
    if d == 2 {
        let (a, b, c) = if orient == Ordering::Greater {
            (simplex[0], simplex[1], simplex[2])
        } else {
            (simplex[1], simplex[0], simplex[2])
        };
        return Ok(Side::from_inside_sign(predicates::power_test(a.xyh(), b.xyh(), c.xyh(), q.xyh())));
    }
    let det = lifted_det(simplex, q, d);
    let s = match orient {
        Ordering::Greater => det,
        _ => det.reverse(),
    };
    Ok(Side::from_inside_sign(s))
}

fn lifted_det(simplex: &[WeightedPoint], q: &WeightedPoint, d: usize) -> Ordering {
    let rows: Vec<Vec<f64>> = simplex
        .iter()
        .map(|p| {
            let mut r: Vec<f64> = (0..d).map(|k| p.v[k] - q.v[k]).collect();
            r.push(dist2(&p.v[..d], &q.v[..d]) + (p.h - q.h));
            r
        })
        .collect();
    if let Some(s) = predicates::det_sign_filtered(&rows) {
        return s;
    }
    use predicates::to_rational as r;
    let exact = simplex
        .iter()
        .map(|p| {
            let diffs: Vec<_> = (0..d).map(|k| r(p.v[k]) - r(q.v[k])).collect();
            let mut l = r(p.h) - r(q.h);
            for x in &diffs {
                l += x * x;
            }
            let mut row = diffs;
            row.push(l);
            row
        })
        .collect();
    predicates::det_exact(exact)
}

/// Sign of `det[v_i − v_{d+1}]`, the orientation of a spatial simplex.
pub fn orientation(simplex: &[WeightedPoint], d: usize) -> Ordering {
    if d == 2 {
        return predicates::orient2d(simplex[0].xy(), simplex[1].xy(), simplex[2].xy());
    }
    let last = &simplex[d];
    let rows: Vec<Vec<f64>> = simplex[..d].iter().map(|p| (0..d).map(|k| p.v[k] - last.v[k]).collect()).collect();
    if let Some(s) = predicates::det_sign_filtered(&rows) {
        return s;
    }
    use predicates::to_rational as r;
    let exact = simplex[..d].iter().map(|p| (0..d).map(|k| r(p.v[k]) - r(last.v[k])).collect()).collect();
    predicates::det_exact(exact)
}

/// Owner of a query point under the power function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellOwner {
    pub index: usize,
    /// Another site attains the same minimal power.
    pub tie: bool,
}

/// Exhaustive argmin of `pow(w, ·)`; ties resolve to the lowest index.
pub fn brute_force_cell_of(w: &[f64], sites: &[WeightedPoint]) -> Option<CellOwner> {
    let mut best: Option<(usize, f64)> = None;
    let mut tie = false;
    for (i, s) in sites.iter().enumerate() {
        let p = pow(w, s);
        match best {
            None => best = Some((i, p)),
            Some((_, b)) if p < b => {
                best = Some((i, p));
                tie = false;
            }
            Some((_, b)) if p == b => tie = true,
            _ => {}
        }
    }
    best.map(|(index, _)| CellOwner { index, tie })
}
