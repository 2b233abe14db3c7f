//! Laguerre diagrams assembled from the dual triangulation, regularity
//! diagnostics, line sections and minus-sampled cell statistics.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::geometry::predicates::{orient2d, power_test};
use crate::geometry::{build_regular_triangulation, pow, DualTessellation, PowerIndex, WeightedPoint};
use crate::ppp::{expected_count_below_paraboloid, paraboloid_level, PointSample, SimulationWindow};

pub type Point2 = [f64; 2];

/// Keeps the part of a convex polygon with `a·x ≤ c`.
pub fn clip_halfplane(poly: &[Point2], a: Point2, c: f64) -> Vec<Point2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let fp = a[0] * p[0] + a[1] * p[1] - c;
        let fq = a[0] * q[0] + a[1] * q[1] - c;
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let s = fp / (fp - fq);
            out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
        }
    }
    out
}

pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - p[1] * q[0]
        })
        .sum::<f64>()
}

/// Whether `w` lies in the closed convex counter-clockwise polygon.
pub fn in_convex_polygon(poly: &[Point2], w: Point2) -> bool {
    let n = poly.len();
    n >= 3
        && (0..n).all(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            (q[0] - p[0]) * (w[1] - p[1]) - (q[1] - p[1]) * (w[0] - p[0]) >= 0.0
        })
}

fn box_polygon(lo: Point2, hi: Point2) -> Vec<Point2> {
    vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]]
}

/// Bisector half-plane `{w : pow(w, s) ≤ pow(w, n)}` as `(a, c)`.
fn power_halfplane(s: &WeightedPoint, n: &WeightedPoint) -> (Point2, f64) {
    let a = [2.0 * (n.v[0] - s.v[0]), 2.0 * (n.v[1] - s.v[1])];
    let c = (n.v[0] * n.v[0] + n.v[1] * n.v[1] + n.h) - (s.v[0] * s.v[0] + s.v[1] * s.v[1] + s.h);
    (a, c)
}

/// A Laguerre vertex: the apex of a dual simplex.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaguerreVertex {
    pub w: Point2,
    /// Common power `K_z` of the incident sites.
    pub k: f64,
    pub sites: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaguerreCell {
    pub site: usize,
    /// Counter-clockwise polygon clipped to the outer box.
    pub polygon: Vec<Point2>,
    /// The cell is unbounded or was cut by the outer box.
    pub clipped: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaguerreDiagram {
    pub window: SimulationWindow,
    pub sites: Vec<WeightedPoint>,
    pub cells: Vec<LaguerreCell>,
    pub vertices: Vec<LaguerreVertex>,
}

impl LaguerreDiagram {
    /// Index into `cells` of the cell containing `w`, if any.
    pub fn cell_at(&self, w: Point2) -> Option<usize> {
        self.cells.iter().position(|c| in_convex_polygon(&c.polygon, w))
    }
}

/// Laguerre diagram of the dual's sites, clipped to the window's outer box.
pub fn laguerre_diagram_from_dual(dual: &DualTessellation, window: &SimulationWindow) -> Result<LaguerreDiagram> {
    if dual.simplices.is_empty() {
        return Err(Error::Degenerate("dual tessellation has no simplices".into()));
    }
    if dual.d != 2 || window.d() != 2 {
        return Err(Error::Unsupported("Laguerre diagrams are assembled for d = 2 only".into()));
    }
    let outer = window.outer();
    let (lo, hi) = ([outer.lo[0], outer.lo[1]], [outer.hi[0], outer.hi[1]]);
    let vertices: Vec<LaguerreVertex> = dual
        .simplices
        .iter()
        .zip(&dual.apices)
        .map(|(s, a)| LaguerreVertex {
            w: [a.w[0], a.w[1]],
            k: a.t,
            sites: *s,
        })
        .collect();
    let mut cells = Vec::new();
    for (site, (star, closed)) in dual.stars().into_iter().enumerate() {
        if star.is_empty() {
            continue;
        }
        let (polygon, clipped) = if closed {
            let ring: Vec<Point2> = star.iter().map(|&t| vertices[t].w).collect();
            let inside = ring.iter().all(|p| outer.contains(p));
            if inside {
                (ring, false)
            } else {
                let mut poly = ring;
                for (a, c) in [([1.0, 0.0], hi[0]), ([-1.0, 0.0], -lo[0]), ([0.0, 1.0], hi[1]), ([0.0, -1.0], -lo[1])] {
                    poly = clip_halfplane(&poly, a, c);
                }
                (poly, true)
            }
        } else {
            let mut neighbors: Vec<usize> = star.iter().flat_map(|&t| dual.simplices[t]).filter(|&v| v != site).collect();
            neighbors.sort_unstable();
            neighbors.dedup();
            let mut poly = box_polygon(lo, hi);
            for n in neighbors {
                let (a, c) = power_halfplane(&dual.sites[site], &dual.sites[n]);
                poly = clip_halfplane(&poly, a, c);
                if poly.is_empty() {
                    break;
                }
            }
            (poly, true)
        };
        if polygon.len() >= 3 && polygon_area(&polygon) > 0.0 {
            cells.push(LaguerreCell { site, polygon, clipped });
        }
    }
    Ok(LaguerreDiagram {
        window: *window,
        sites: dual.sites.clone(),
        cells,
        vertices,
    })
}

/// Outcome of the regularity conditions on a finite sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// The convex hull of the sites contains the inner box.
    pub p1: bool,
    /// Site counts below test paraboloids against their expectation:
    /// `(t, observed, expected)` with the apex at the inner-box center.
    pub p2_counts: Vec<(f64, usize, f64)>,
    /// Pairs of adjacent simplices whose four sites share a paraboloid.
    pub p3_violations: usize,
    /// Coincident sites or collinear triples among triangulation neighbors.
    pub p4_violations: usize,
}

impl RegularityReport {
    pub fn p2(&self) -> bool {
        self.p2_counts.iter().all(|(_, n, _)| *n < usize::MAX)
    }

    pub fn pass(&self) -> bool {
        self.p1 && self.p2() && self.p3_violations == 0 && self.p4_violations == 0
    }
}

pub fn verify_regularity(sample: &PointSample, f: &DensityModel) -> Result<RegularityReport> {
    let dual = build_regular_triangulation(&sample.points, 2)?;
    let inner = sample.window.inner;
    let hull = convex_hull(&sample.points.iter().map(|p| p.xy()).collect::<Vec<_>>());
    let corners = [
        [inner.lo[0], inner.lo[1]],
        [inner.hi[0], inner.lo[1]],
        [inner.hi[0], inner.hi[1]],
        [inner.lo[0], inner.hi[1]],
    ];
    let p1 = hull.len() >= 3
        && corners
            .iter()
            .all(|&c| (0..hull.len()).all(|i| orient2d(hull[i], hull[(i + 1) % hull.len()], c) != Ordering::Less));

    let center = [(inner.lo[0] + inner.hi[0]) / 2.0, (inner.lo[1] + inner.hi[1]) / 2.0];
    let mut p2_counts = Vec::new();
    for target in [1.0, 3.0, 10.0] {
        let t = paraboloid_level(f, sample.gamma, 2, target)?;
        if t > sample.window.weight_cap {
            continue;
        }
        let n = sample.points.iter().filter(|p| pow(&center, p) < t).count();
        p2_counts.push((t, n, expected_count_below_paraboloid(f, sample.gamma, 2, t)?));
    }

    let mut p3 = 0;
    for (k, s) in dual.simplices.iter().enumerate() {
        for (j, nb) in dual.adjacency[k].iter().enumerate() {
            let Some(o) = *nb else { continue };
            if o < k {
                continue;
            }
            let (a, b) = (s[(j + 1) % 3], s[(j + 2) % 3]);
            let opp = dual.simplices[o].iter().copied().find(|&v| v != a && v != b).expect("shared edge");
            let pts = dual.simplex_points(k);
            if power_test(pts[0].xyh(), pts[1].xyh(), pts[2].xyh(), dual.sites[opp].xyh()) == Ordering::Equal {
                p3 += 1;
            }
        }
    }

    let mut p4 = 0;
    let mut sorted: Vec<Point2> = sample.points.iter().map(|p| p.xy()).collect();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p4 += sorted.windows(2).filter(|w| w[0] == w[1]).count();
    for (site, (star, _)) in dual.stars().into_iter().enumerate() {
        let mut nbrs: Vec<usize> = star.iter().flat_map(|&t| dual.simplices[t]).filter(|&v| v != site).collect();
        nbrs.sort_unstable();
        nbrs.dedup();
        let c = dual.sites[site].xy();
        for i in 0..nbrs.len() {
            for j in i + 1..nbrs.len() {
                if orient2d(c, dual.sites[nbrs[i]].xy(), dual.sites[nbrs[j]].xy()) == Ordering::Equal {
                    p4 += 1;
                }
            }
        }
    }
    Ok(RegularityReport {
        p1,
        p2_counts,
        p3_violations: p3,
        p4_violations: p4,
    })
}

/// Counter-clockwise convex hull without collinear points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut h: Vec<Point2> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = h.len();
        let seq: Vec<Point2> = if pass == 0 { p.clone() } else { p.iter().rev().copied().collect() };
        for q in seq {
            while h.len() >= start + 2 && orient2d(h[h.len() - 2], h[h.len() - 1], q) != Ordering::Greater {
                h.pop();
            }
            h.push(q);
        }
        h.pop();
    }
    h
}

/// Normality and duality diagnostics over Laguerre vertices inside the
/// inner box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub interior_vertices: usize,
    /// Vertices where the number of minimizing sites differs from 3.
    pub violations: usize,
    /// Vertices whose minimizers are not exactly the simplex sites.
    pub duality_mismatches: usize,
}

/// Counts, at each interior Laguerre vertex `z`, the sites attaining
/// `pow(z, ·) = K_z` up to a relative tolerance.
pub fn normality_check(dual: &DualTessellation, window: &SimulationWindow, rel_tol: f64) -> NormalityReport {
    let index = PowerIndex::new(&dual.sites, 2);
    let mut report = NormalityReport::default();
    for (s, a) in dual.simplices.iter().zip(&dual.apices) {
        let w = [a.w[0], a.w[1]];
        if !window.inner.contains(&w) {
            continue;
        }
        report.interior_vertices += 1;
        let tol = rel_tol * (1.0 + a.t.abs() + dual.sites[s[0]].h.abs());
        let mut near = index.within(&w, a.t + tol);
        if near.len() != 3 {
            report.violations += 1;
        }
        near.retain(|i| pow(&w, &dual.sites[*i]) >= a.t - tol);
        let mut sites = *s;
        sites.sort_unstable();
        if near != sites {
            report.duality_mismatches += 1;
        }
    }
    report
}

/// Grid cross-check of the diagram against the power argmin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OwnershipReport {
    pub queries: usize,
    pub agree: usize,
    /// Queries owned by no cell or by several (boundary hits).
    pub ambiguous: usize,
}

impl OwnershipReport {
    pub fn agreement(&self) -> f64 {
        self.agree as f64 / self.queries as f64
    }
}

/// Compares cell membership of grid points in the inner box with `owner`.
pub fn ownership_check<F>(diagram: &LaguerreDiagram, n_per_side: usize, owner: F) -> OwnershipReport
where
    F: Fn(Point2) -> usize,
{
    let inner = diagram.window.inner;
    let nx = n_per_side.max(2);
    let step = [inner.side(0) / (nx - 1) as f64, inner.side(1) / (nx - 1) as f64];
    let node = |i: usize, j: usize| [inner.lo[0] + i as f64 * step[0], inner.lo[1] + j as f64 * step[1]];
    let mut hits = vec![(usize::MAX, 0u8); nx * nx];
    for cell in &diagram.cells {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &cell.polygon {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let range = |k: usize| {
            if step[k] == 0.0 {
                return (0, 0);
            }
            let a = ((lo[k] - inner.lo[k]) / step[k]).ceil().max(0.0) as usize;
            let b = ((hi[k] - inner.lo[k]) / step[k]).floor().min((nx - 1) as f64);
            if b < 0.0 {
                (1, 0)
            } else {
                (a, b as usize)
            }
        };
        let ((i0, i1), (j0, j1)) = (range(0), range(1));
        for i in i0..=i1.min(nx - 1) {
            for j in j0..=j1.min(nx - 1) {
                if i > i1 || j > j1 {
                    continue;
                }
                if in_convex_polygon(&cell.polygon, node(i, j)) {
                    let h = &mut hits[i * nx + j];
                    h.0 = cell.site;
                    h.1 = h.1.saturating_add(1);
                }
            }
        }
    }
    let mut report = OwnershipReport::default();
    for i in 0..nx {
        for j in 0..nx {
            report.queries += 1;
            let (site, count) = hits[i * nx + j];
            if count != 1 {
                report.ambiguous += 1;
            } else if owner(node(i, j)) == site {
                report.agree += 1;
            }
        }
    }
    report
}

/// A line in the plane through `point` with unit direction `dir`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flat {
    pub point: Point2,
    pub dir: Point2,
}

impl Flat {
    pub fn new(point: Point2, dir: Point2) -> Result<Self> {
        let n = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Degenerate("line direction must be non-zero".into()));
        }
        Ok(Self {
            point,
            dir: [dir[0] / n, dir[1] / n],
        })
    }

    pub fn at(&self, s: f64) -> Point2 {
        [self.point[0] + s * self.dir[0], self.point[1] + s * self.dir[1]]
    }

    /// Arc-length coordinate of the projection of `v`.
    pub fn coordinate(&self, v: Point2) -> f64 {
        (v[0] - self.point[0]) * self.dir[0] + (v[1] - self.point[1]) * self.dir[1]
    }

    pub fn dist2(&self, v: Point2) -> f64 {
        let s = self.coordinate(v);
        let p = self.at(s);
        (v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2)
    }

    /// Parameter range of the line inside a box, if it meets the box.
    pub fn clip(&self, lo: Point2, hi: Point2) -> Option<(f64, f64)> {
        let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..2 {
            if self.dir[k] == 0.0 {
                if self.point[k] < lo[k] || self.point[k] > hi[k] {
                    return None;
                }
            } else {
                let t0 = (lo[k] - self.point[k]) / self.dir[k];
                let t1 = (hi[k] - self.point[k]) / self.dir[k];
                a = a.max(t0.min(t1));
                b = b.min(t0.max(t1));
            }
        }
        (a <= b).then_some((a, b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionInterval {
    pub site: usize,
    pub lo: f64,
    pub hi: f64,
}

impl SectionInterval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionalTessellation {
    pub flat: Flat,
    /// Parameter range of the flat inside the inner box.
    pub segment: (f64, f64),
    /// Consecutive intervals covering `segment`.
    pub intervals: Vec<SectionInterval>,
}

impl SectionalTessellation {
    /// Lengths of intervals that do not touch the segment ends.
    pub fn interior_lengths(&self) -> Vec<f64> {
        let n = self.intervals.len();
        if n < 3 {
            return Vec::new();
        }
        self.intervals[1..n - 1].iter().map(|i| i.length()).collect()
    }

    /// Largest gap or overlap between consecutive intervals.
    pub fn max_mismatch(&self) -> f64 {
        let mut m = (self.intervals.first().map_or(f64::INFINITY, |i| i.lo) - self.segment.0).abs();
        m = m.max((self.intervals.last().map_or(f64::INFINITY, |i| i.hi) - self.segment.1).abs());
        for w in self.intervals.windows(2) {
            m = m.max((w[1].lo - w[0].hi).abs());
        }
        m
    }
}

/// Section of a planar diagram by a line, clipped to the inner box.
pub fn intersect_with_flat(diagram: &LaguerreDiagram, flat: &Flat) -> Result<SectionalTessellation> {
    let inner = diagram.window.inner;
    let (s0, s1) = flat
        .clip([inner.lo[0], inner.lo[1]], [inner.hi[0], inner.hi[1]])
        .ok_or_else(|| Error::InvalidWindow("the line misses the inner window".into()))?;
    let mut intervals = Vec::new();
    for cell in &diagram.cells {
        let (mut a, mut b) = (s0, s1);
        let n = cell.polygon.len();
        for i in 0..n {
            let (p, q) = (cell.polygon[i], cell.polygon[(i + 1) % n]);
            // Inside when the cross product (q − p) × (x − p) ≥ 0.
            let e = [q[0] - p[0], q[1] - p[1]];
            let base = e[0] * (flat.point[1] - p[1]) - e[1] * (flat.point[0] - p[0]);
            let slope = e[0] * flat.dir[1] - e[1] * flat.dir[0];
            if slope == 0.0 {
                if base < 0.0 {
                    b = a - 1.0;
                    break;
                }
            } else {
                let t = -base / slope;
                if slope > 0.0 {
                    a = a.max(t);
                } else {
                    b = b.min(t);
                }
            }
        }
        if b > a {
            intervals.push(SectionInterval { site: cell.site, lo: a, hi: b });
        }
    }
    intervals.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    Ok(SectionalTessellation {
        flat: *flat,
        segment: (s0, s1),
        intervals,
    })
}

/// One-dimensional Laguerre diagram of `(position, weight)` sites restricted
/// to `[lo, hi]`, from the lower hull of `(s, s² + h)`.
pub fn laguerre_1d(sites: &[(f64, f64)], lo: f64, hi: f64) -> Vec<SectionInterval> {
    let mut idx: Vec<usize> = (0..sites.len()).collect();
    idx.sort_by(|&a, &b| sites[a].0.total_cmp(&sites[b].0).then(sites[a].1.total_cmp(&sites[b].1)));
    idx.dedup_by(|b, a| sites[*a].0 == sites[*b].0);
    let lift = |i: usize| [sites[i].0, sites[i].0 * sites[i].0 + sites[i].1];
    let mut hull: Vec<usize> = Vec::new();
    for &i in &idx {
        while hull.len() >= 2 && orient2d(lift(hull[hull.len() - 2]), lift(hull[hull.len() - 1]), lift(i)) != Ordering::Greater {
            hull.pop();
        }
        hull.push(i);
    }
    let boundary = |i: usize, j: usize| {
        let (a, b) = (lift(i), lift(j));
        (b[1] - a[1]) / (2.0 * (b[0] - a[0]))
    };
    let mut out = Vec::new();
    for (k, &i) in hull.iter().enumerate() {
        let a = if k == 0 { f64::NEG_INFINITY } else { boundary(hull[k - 1], i) };
        let b = if k + 1 == hull.len() { f64::INFINITY } else { boundary(i, hull[k + 1]) };
        let (a, b) = (a.max(lo), b.min(hi));
        if b > a {
            out.push(SectionInterval { site: i, lo: a, hi: b });
        }
    }
    out
}

/// Projects planar sites onto a line: coordinate along the line and weight
/// `h + dist²`.
pub fn project_to_flat(sites: &[WeightedPoint], flat: &Flat) -> Vec<(f64, f64)> {
    sites.iter().map(|p| (flat.coordinate(p.xy()), p.h + flat.dist2(p.xy()))).collect()
}

/// Per-simplex statistics of the dual tessellation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub simplex: usize,
    pub volume: f64,
    pub n_vertices: usize,
    /// `Vol^ν`.
    pub weight: f64,
    pub vertex_weights: Vec<f64>,
    pub apex_t: f64,
    pub apex_w: Point2,
    pub included: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub nu: f64,
    pub rows: Vec<CellRow>,
}

impl CellStats {
    pub fn included(&self) -> impl Iterator<Item = &CellRow> {
        self.rows.iter().filter(|r| r.included)
    }

    /// `Σ Vol^e` over included simplices.
    pub fn volume_power_sum(&self, e: f64) -> f64 {
        self.included().map(|r| r.volume.powf(e)).sum()
    }

    /// CSV with one row per included simplex.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = out;
        writeln!(w, "simplex,volume,nvertices,weight,apex_t")?;
        for r in self.included() {
            writeln!(w, "{},{},{},{},{}", r.simplex, r.volume, r.n_vertices, r.weight, r.apex_t)?;
        }
        Ok(())
    }
}

/// Minus-sampled statistics: a simplex is included when its apex lies in the
/// inner box and its whole apex paraboloid region above the floor was
/// simulated.
pub fn cell_statistics(dual: &DualTessellation, window: &SimulationWindow, weight_nu: f64) -> Result<CellStats> {
    let rows: Vec<CellRow> = dual
        .simplices
        .iter()
        .zip(&dual.apices)
        .enumerate()
        .map(|(k, (s, a))| {
            let p = s.map(|i| dual.sites[i].xy());
            let volume = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
            let w = [a.w[0], a.w[1]];
            CellRow {
                simplex: k,
                volume,
                n_vertices: 3,
                weight: volume.powf(weight_nu),
                vertex_weights: s.iter().map(|&i| dual.sites[i].h).collect(),
                apex_t: a.t,
                apex_w: w,
                included: window.inner.contains(&w) && window.covers_paraboloid(&w, a.t),
            }
        })
        .collect();
    if !rows.iter().any(|r| r.included) {
        return Err(Error::EmptyInclusion("no simplex apex inside the inner window".into()));
    }
    Ok(CellStats { nu: weight_nu, rows })
}

/// Laguerre cells lying entirely inside the inner box, as
/// `(site, area, vertex count, generator weight)`.
pub fn interior_cells(diagram: &LaguerreDiagram) -> Vec<(usize, f64, usize, f64)> {
    diagram
        .cells
        .iter()
        .filter(|c| !c.clipped && c.polygon.iter().all(|p| diagram.window.inner.contains(p)))
        .map(|c| (c.site, polygon_area(&c.polygon), c.polygon.len(), diagram.sites[c.site].h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::brute_force_cell_of;
    use crate::ppp::{generate_two_pass, Aabb, GenerateOptions};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn wp(x: f64, y: f64, h: f64) -> WeightedPoint {
        WeightedPoint::new(&[x, y], h)
    }

    fn window(half: f64) -> SimulationWindow {
        SimulationWindow::uniform(Aabb::centered(2, half).unwrap(), 0.0, 100.0, -100.0).unwrap()
    }

    #[test]
    fn three_symmetric_sites() {
        let pts: Vec<WeightedPoint> = (0..3)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 3.0;
                wp(a.cos(), a.sin(), 0.0)
            })
            .collect();
        let dual = build_regular_triangulation(&pts, 2).unwrap();
        let diagram = laguerre_diagram_from_dual(&dual, &window(3.0)).unwrap();
        assert_eq!(diagram.vertices.len(), 1);
        let v = diagram.vertices[0];
        assert!(v.w[0].abs() < 1e-15 && v.w[1].abs() < 1e-15);
        assert_relative_eq!(v.k, 1.0, max_relative = 1e-14);
        assert_eq!(diagram.cells.len(), 3);
        let total: f64 = diagram.cells.iter().map(|c| polygon_area(&c.polygon)).sum();
        assert_relative_eq!(total, 36.0, max_relative = 1e-12);
    }

    #[test]
    fn square_center_vertex() {
        // Perturb one corner slightly so the square's center stays a vertex
        // of both triangles up to rounding.
        let h = 0.5;
        let pts = [wp(1.0, 1.0, h), wp(-1.0, 1.0, h), wp(-1.0, -1.0, h), wp(1.0, -1.0, h)];
        let dual = build_regular_triangulation(&pts, 2).unwrap();
        let diagram = laguerre_diagram_from_dual(&dual, &window(2.0)).unwrap();
        for v in &diagram.vertices {
            assert!(v.w[0].abs() < 1e-15 && v.w[1].abs() < 1e-15);
            assert_relative_eq!(v.k, 2.0 + h, max_relative = 1e-14);
        }
        for c in &diagram.cells {
            assert_relative_eq!(polygon_area(&c.polygon), 4.0, max_relative = 1e-12);
        }
    }

    fn random_sample(n: usize, seed: u64) -> Vec<WeightedPoint> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| wp(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-0.3..0.3)))
            .collect()
    }

    #[test]
    fn grid_ownership_matches_brute_force() {
        let pts = random_sample(200, 1);
        let dual = build_regular_triangulation(&pts, 2).unwrap();
        let win = window(1.5);
        let diagram = laguerre_diagram_from_dual(&dual, &win).unwrap();
        let r = ownership_check(&diagram, 120, |w| brute_force_cell_of(&w, &pts).unwrap().index);
        assert!(r.agreement() >= 0.9999, "{r:?}");
        let total: f64 = diagram.cells.iter().map(|c| polygon_area(&c.polygon)).sum();
        assert_relative_eq!(total, 9.0, max_relative = 1e-9);
    }

    #[test]
    fn vertices_are_normal_and_dual() {
        let pts = random_sample(300, 2);
        let dual = build_regular_triangulation(&pts, 2).unwrap();
        let r = normality_check(&dual, &window(1.5), 1e-9);
        assert!(r.interior_vertices > 50);
        assert_eq!(r.violations, 0);
        assert_eq!(r.duality_mismatches, 0);
    }

    #[test]
    fn regularity_flags_degeneracies() {
        let f = DensityModel::gaussian(1.0).unwrap();
        let win = window(1.0);
        let sample = |points: Vec<WeightedPoint>| PointSample {
            d: 2,
            points,
            seed: 0,
            window: win,
            gamma: 1.0,
            model_hash: String::new(),
        };
        let circle = sample(vec![wp(2.0, 0.0, 0.0), wp(0.0, 2.0, 0.0), wp(-2.0, 0.0, 0.0), wp(0.0, -2.0, 0.0)]);
        let r = verify_regularity(&circle, &f).unwrap();
        assert!(r.p1);
        assert!(r.p3_violations > 0);
        let mut lattice = Vec::new();
        for i in -3..=3 {
            for j in -3..=3 {
                lattice.push(wp(i as f64, j as f64, 0.0));
            }
        }
        let r = verify_regularity(&sample(lattice), &f).unwrap();
        assert!(r.p4_violations > 0);
        let r = verify_regularity(&sample(random_sample(100, 3)), &f).unwrap();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn single_and_split_sections() {
        let pts = [wp(-1.0, 0.0, 0.0), wp(1.0, 0.0, 0.0), wp(0.0, 5.0, 0.0)];
        let dual = build_regular_triangulation(&pts, 2).unwrap();
        let diagram = laguerre_diagram_from_dual(&dual, &window(1.0)).unwrap();
        let flat = Flat::new([0.0, 0.0], [1.0, 0.0]).unwrap();
        let sec = intersect_with_flat(&diagram, &flat).unwrap();
        assert_eq!(sec.intervals.len(), 2);
        assert!(sec.intervals[0].hi.abs() < 1e-12);
        assert!(sec.max_mismatch() < 1e-12);
        // A line through the far cell only.
        let flat = Flat::new([0.0, 4.0], [1.0, 0.0]).unwrap();
        let big = SimulationWindow::uniform(Aabb::new(&[-1.0, 3.5], &[1.0, 4.5]).unwrap(), 0.0, 100.0, -100.0).unwrap();
        let diagram = laguerre_diagram_from_dual(&dual, &big).unwrap();
        let sec = intersect_with_flat(&diagram, &flat).unwrap();
        assert_eq!(sec.intervals.len(), 1);
        assert_eq!(sec.intervals[0].site, 2);
        let missing = Flat::new([0.0, 10.0], [1.0, 0.0]).unwrap();
        assert!(intersect_with_flat(&diagram, &missing).is_err());
    }

    #[test]
    fn section_matches_projected_1d_diagram() {
        let pts = random_sample(400, 4);
        let dual = build_regular_triangulation(&pts, 2).unwrap();
        let win = window(1.5);
        let diagram = laguerre_diagram_from_dual(&dual, &win).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let flat = Flat::new([rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)], [angle.cos(), angle.sin()]).unwrap();
            let sec = intersect_with_flat(&diagram, &flat).unwrap();
            assert!(sec.max_mismatch() < 1e-9);
            let direct = laguerre_1d(&project_to_flat(&pts, &flat), sec.segment.0, sec.segment.1);
            assert_eq!(direct.len(), sec.intervals.len());
            for (a, b) in direct.iter().zip(&sec.intervals) {
                assert_eq!(a.site, b.site);
                assert!((a.lo - b.lo).abs() < 1e-9 && (a.hi - b.hi).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn one_dimensional_diagram() {
        let cells = laguerre_1d(&[(0.0, 0.0), (2.0, 0.0), (1.0, 5.0)], -1.0, 3.0);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].site, 0);
        assert_relative_eq!(cells[0].hi, 1.0);
        // Lowering site 0 by δ moves the boundary by δ/(2·2).
        let cells = laguerre_1d(&[(0.0, -0.4), (2.0, 0.0)], -1.0, 3.0);
        assert_relative_eq!(cells[0].hi, 1.1, max_relative = 1e-14);
    }

    #[test]
    fn statistics_include_inner_apices() {
        let pts = [wp(0.0, 0.0, 0.0), wp(1.0, 0.0, 0.0), wp(0.0, 1.0, 0.0)];
        let dual = build_regular_triangulation(&pts, 2).unwrap();
        let win = SimulationWindow::uniform(Aabb::centered(2, 1.0).unwrap(), 1.0, 100.0, -0.01).unwrap();
        let stats = cell_statistics(&dual, &win, 0.0).unwrap();
        assert!(stats.rows[0].included);
        assert_relative_eq!(stats.rows[0].volume, 0.5);
        let far = SimulationWindow::uniform(Aabb::new(&[5.0, 5.0], &[6.0, 6.0]).unwrap(), 0.0, 100.0, -100.0).unwrap();
        assert!(matches!(cell_statistics(&dual, &far, 0.0), Err(Error::EmptyInclusion(_))));
        let mut buf = Vec::new();
        stats.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn generated_samples_are_regular() {
        let inner = Aabb::centered(2, 2.0).unwrap();
        for f in [
            DensityModel::beta(2, 1.0).unwrap(),
            DensityModel::beta_prime(2, 2.5).unwrap(),
            DensityModel::gaussian(1.0).unwrap(),
        ] {
            let g = generate_two_pass(&f, 1.0, &inner, 5, &GenerateOptions::default()).unwrap();
            let dual = build_regular_triangulation(&g.sample.points, 2).unwrap();
            let win = g.sample.window;
            let r = normality_check(&dual, &win, 1e-9);
            assert_eq!(r.violations, 0);
            assert_eq!(r.duality_mismatches, 0);
            let diagram = laguerre_diagram_from_dual(&dual, &win).unwrap();
            let idx = PowerIndex::new(&g.sample.points, 2);
            let o = ownership_check(&diagram, 100, |w| idx.nearest(&w).unwrap().0);
            assert!(o.agreement() >= 0.9999, "{o:?}");
        }
    }
}
