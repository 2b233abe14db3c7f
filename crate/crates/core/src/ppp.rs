//! Sampling the marked Poisson process `η_{f,γ}` on bounded regions of
//! `ℝ^d × E`.
//!
//! A window with a *layered* scheme splits `[floor, cap]` into geometric
//! weight bands; band `k` covers weights `[cap − s_{k+1}, cap − s_k]` and is
//! sampled over the inner box dilated by `√s_{k+1}`. Every site that can
//! attain power `≤ cap` somewhere in the inner box is therefore sampled,
//! while the far-out shells only receive low weights.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityModel, Family};
use crate::error::{Error, Result};
use crate::fractional::FracEvaluator;
use crate::geometry::{PowerIndex, WeightedPoint, MAX_DIM};
use crate::quad::{self, QuadOptions};
use crate::rng::{self, Rng};
use crate::table::MonotoneTable;

/// Band count used when the inner box has no extent.
pub const DEFAULT_LAYERS: usize = 24;
/// Cap on the band count of a layered window.
const MAX_LAYERS: usize = 200;
/// Knots of the inverse-CDF table used for custom densities.
pub const TABLE_KNOTS: usize = 4096;
/// Default residual-bias budget: expected number of influential sites lost
/// below the weight floor.
pub const BIAS_BUDGET: f64 = 1e-4;
/// Poisson means above this are refused.
const MAX_MEAN: f64 = 5e7;

/// Axis-aligned box in `ℝ^d`; degenerate sides are allowed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AabbRepr", into = "AabbRepr")]
pub struct Aabb {
    pub d: usize,
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AabbRepr {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<AabbRepr> for Aabb {
    type Error = Error;
    fn try_from(r: AabbRepr) -> Result<Self> {
        Aabb::new(&r.lo, &r.hi)
    }
}

impl From<Aabb> for AabbRepr {
    fn from(b: Aabb) -> Self {
        Self {
            lo: b.lo[..b.d].to_vec(),
            hi: b.hi[..b.d].to_vec(),
        }
    }
}

impl Aabb {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let d = lo.len();
        if d == 0 || d > MAX_DIM || hi.len() != d {
            return Err(Error::InvalidWindow(format!("box corners of lengths {} and {}", lo.len(), hi.len())));
        }
        if lo.iter().chain(hi).any(|x| !x.is_finite()) {
            return Err(Error::InvalidWindow("box corners must be finite".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidWindow(format!("empty box {lo:?} to {hi:?}")));
        }
        let mut b = Self {
            d,
            lo: [0.0; MAX_DIM],
            hi: [0.0; MAX_DIM],
        };
        b.lo[..d].copy_from_slice(lo);
        b.hi[..d].copy_from_slice(hi);
        Ok(b)
    }

    /// `[-half, half]^d`.
    pub fn centered(d: usize, half: f64) -> Result<Self> {
        Self::new(&vec![-half; d], &vec![half; d])
    }

    pub fn side(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }

    pub fn volume(&self) -> f64 {
        (0..self.d).map(|k| self.side(k)).product()
    }

    pub fn has_interior(&self) -> bool {
        (0..self.d).all(|k| self.side(k) > 0.0)
    }

    pub fn dilate(&self, r: f64) -> Self {
        let mut b = *self;
        for k in 0..self.d {
            b.lo[k] -= r;
            b.hi[k] += r;
        }
        b
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        (0..self.d).all(|k| self.lo[k] <= v[k] && v[k] <= self.hi[k])
    }

    pub fn dist2(&self, v: &[f64]) -> f64 {
        (0..self.d)
            .map(|k| {
                let g = (self.lo[k] - v[k]).max(v[k] - self.hi[k]).max(0.0);
                g * g
            })
            .sum()
    }

    pub fn sample(&self, rng: &mut Rng) -> [f64; MAX_DIM] {
        let mut v = [0.0; MAX_DIM];
        for k in 0..self.d {
            v[k] = self.lo[k] + self.side(k) * rng.random::<f64>();
        }
        v
    }

    /// Grid nodes covering the box with spacing at most `step`, and the
    /// largest distance from a box point to its nearest node.
    pub fn grid(&self, step: f64) -> Result<(Vec<[f64; MAX_DIM]>, f64)> {
        if !(step > 0.0) {
            return Err(Error::InvalidWindow(format!("grid step {step} must be positive")));
        }
        let counts: Vec<usize> = (0..self.d).map(|k| (self.side(k) / step).ceil() as usize + 1).collect();
        let total: usize = counts.iter().product();
        if total > 50_000_000 {
            return Err(Error::InvalidWindow(format!("grid of {total} nodes is too fine")));
        }
        let spacing: Vec<f64> = (0..self.d)
            .map(|k| if counts[k] > 1 { self.side(k) / (counts[k] - 1) as f64 } else { 0.0 })
            .collect();
        let mut nodes = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut v = [0.0; MAX_DIM];
            for k in 0..self.d {
                let i = rem % counts[k];
                rem /= counts[k];
                v[k] = if counts[k] > 1 && i + 1 == counts[k] { self.hi[k] } else { self.lo[k] + i as f64 * spacing[k] };
            }
            nodes.push(v);
        }
        let radius = 0.5 * spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
        Ok((nodes, radius))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Geometric weight bands over growing boxes.
    #[default]
    Layered,
    /// One band over the full outer box.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationWindow {
    pub inner: Aabb,
    pub spatial_margin: f64,
    pub weight_cap: f64,
    pub weight_floor: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Number of weight bands of a layered window.
    #[serde(default = "default_layers")]
    pub layers: usize,
}

fn default_layers() -> usize {
    DEFAULT_LAYERS
}

/// A weight band and the box its sites are drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub region: Aabb,
    pub h_lo: f64,
    pub h_hi: f64,
}

impl SimulationWindow {
    /// Single-band window over `inner` dilated by `margin`.
    pub fn uniform(inner: Aabb, margin: f64, cap: f64, floor: f64) -> Result<Self> {
        let w = Self {
            inner,
            spatial_margin: margin,
            weight_cap: cap,
            weight_floor: floor,
            scheme: Scheme::Uniform,
            layers: 1,
        };
        w.validate()?;
        Ok(w)
    }

    /// Layered window; the margin is `√(cap − floor)`. The first band dilates
    /// the inner box by about 1% of its longest side.
    pub fn layered(inner: Aabb, cap: f64, floor: f64) -> Result<Self> {
        let span = cap - floor;
        let side = (0..inner.d).map(|k| inner.side(k)).fold(0.0, f64::max);
        let layers = if side > 0.0 && span.is_finite() && span > 0.0 {
            let s_min = (0.01 * side).powi(2);
            ((span / s_min).log2().ceil().max(1.0) as usize + 1).clamp(DEFAULT_LAYERS, MAX_LAYERS)
        } else {
            DEFAULT_LAYERS
        };
        let w = Self {
            inner,
            spatial_margin: span.max(0.0).sqrt(),
            weight_cap: cap,
            weight_floor: floor,
            scheme: Scheme::Layered,
            layers,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spatial_margin >= 0.0) || !self.spatial_margin.is_finite() {
            return Err(Error::InvalidWindow(format!("margin {} must be finite and non-negative", self.spatial_margin)));
        }
        if self.weight_cap.is_nan() || self.weight_floor.is_nan() || !(self.weight_floor < self.weight_cap) {
            return Err(Error::InvalidWindow(format!(
                "weight range [{}, {}] is empty",
                self.weight_floor, self.weight_cap
            )));
        }
        if !self.weight_cap.is_finite() {
            return Err(Error::InfiniteMeasure("weight cap must be finite".into()));
        }
        if self.scheme == Scheme::Layered && !self.weight_floor.is_finite() {
            return Err(Error::InvalidWindow("a layered window needs a finite weight floor".into()));
        }
        if self.layers == 0 || self.layers > MAX_LAYERS {
            return Err(Error::InvalidWindow(format!("layer count {} outside 1..={MAX_LAYERS}", self.layers)));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.inner.d
    }

    pub fn outer(&self) -> Aabb {
        self.inner.dilate(self.spatial_margin)
    }

    pub fn bands(&self) -> Vec<Band> {
        match self.scheme {
            Scheme::Uniform => vec![Band {
                region: self.outer(),
                h_lo: self.weight_floor,
                h_hi: self.weight_cap,
            }],
            Scheme::Layered => {
                let n = self.layers;
                (0..n)
                    .map(|k| Band {
                        region: self.inner.dilate(self.band_edge(k + 1).sqrt()),
                        h_lo: if k + 1 == n { self.weight_floor } else { self.weight_cap - self.band_edge(k + 1) },
                        h_hi: self.weight_cap - self.band_edge(k),
                    })
                    .collect()
            }
        }
    }

    /// Whether `(v, h)` lies in the sampled region.
    pub fn contains(&self, p: &WeightedPoint) -> bool {
        if !(p.h >= self.weight_floor && p.h <= self.weight_cap) {
            return false;
        }
        match self.scheme {
            Scheme::Uniform => self.outer().contains(&p.v),
            Scheme::Layered => self.inner.dilate(self.band_reach2(p.h).sqrt()).contains(&p.v),
        }
    }

    // `s_k`: distance below the cap of the top of band `k`.
    fn band_edge(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            (self.weight_cap - self.weight_floor) * 0.5f64.powi((self.layers - k) as i32)
        }
    }

    // Squared dilation radius `s_{k+1}` of the band containing weight `h`.
    fn band_reach2(&self, h: f64) -> f64 {
        let x = self.weight_cap - h;
        let k = (1..=self.layers).find(|&k| x <= self.band_edge(k)).unwrap_or(self.layers);
        self.band_edge(k)
    }

    /// Whether the whole set `{(v, h): h ≥ floor, h ≤ t − ‖v − w‖²}` lies in
    /// the sampled region.
    pub fn covers_paraboloid(&self, w: &[f64], t: f64) -> bool {
        if t > self.weight_cap {
            return false;
        }
        match self.scheme {
            Scheme::Layered => self.inner.contains(w),
            Scheme::Uniform => {
                let r = (t - self.weight_floor).max(0.0).sqrt();
                self.outer().contains(w) && (0..self.d()).all(|k| w[k] - r >= self.outer().lo[k] && w[k] + r <= self.outer().hi[k])
            }
        }
    }
}

/// A realization of the process on a window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointSample {
    pub d: usize,
    pub points: Vec<WeightedPoint>,
    pub seed: u64,
    pub window: SimulationWindow,
    pub gamma: f64,
    pub model_hash: String,
}

/// Weight marginal restricted to bands, with closed-form inversion for the
/// three families and a monotone table otherwise.
#[derive(Clone, Debug)]
pub struct WeightLaw {
    kind: LawKind,
}

#[derive(Clone, Debug)]
enum LawKind {
    Power { beta: f64, scale: f64, origin: f64 },
    NegPower { beta: f64, scale: f64, pole: f64 },
    Exp { lambda: f64, scale: f64 },
    Table { cdf: MonotoneTable, inv: MonotoneTable },
}

impl WeightLaw {
    /// `lo` and `hi` bound the weights that will be requested; they only
    /// matter for custom densities, where they set the table range.
    pub fn new(f: &DensityModel, lo: f64, hi: f64) -> Result<Self> {
        let kind = match f.family() {
            &Family::PowerLaw { beta, scale, origin } => LawKind::Power { beta, scale, origin },
            &Family::NegPowerLaw { beta, scale, pole } => LawKind::NegPower { beta, scale, pole },
            &Family::Exponential { lambda, scale } => LawKind::Exp { lambda, scale },
            Family::Custom(_) => Self::table(f, lo, hi)?,
        };
        Ok(Self { kind })
    }

    fn table(f: &DensityModel, lo: f64, hi: f64) -> Result<LawKind> {
        let (s0, s1) = f.support();
        let (lo, hi) = (lo.max(s0), hi.min(s1));
        if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
            return Err(Error::InfiniteMeasure(format!("custom weight range [{lo}, {hi}] must be finite and non-empty")));
        }
        let opts = QuadOptions::with_tol(1e-10);
        let n = TABLE_KNOTS;
        let knots: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let pieces = knots
            .par_windows(2)
            .map(|w| quad::finite(|h| f.eval(h), w[0], w[1], &opts).map(|r| r.value.max(0.0)))
            .collect::<Result<Vec<f64>>>()?;
        let mut cdf = Vec::with_capacity(n);
        cdf.push(0.0);
        for p in pieces {
            cdf.push(cdf.last().unwrap() + p);
        }
        if !(cdf[n - 1] > 0.0) {
            return Err(Error::InvalidModel(format!("density has no mass on [{lo}, {hi}]")));
        }
        let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (c, h) in cdf.iter().zip(&knots) {
            if x.last().is_none_or(|&l| *c > l) {
                x.push(*c);
                y.push(*h);
            }
        }
        if x.len() < 2 {
            return Err(Error::InvalidModel("density mass is concentrated on a single knot".into()));
        }
        Ok(LawKind::Table {
            cdf: MonotoneTable::new(knots, cdf),
            inv: MonotoneTable::new(x, y),
        })
    }

    /// `∫_a^b f`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        match self.kind {
            LawKind::Power { beta, scale, origin } => {
                let (x0, x1) = ((a - origin).max(0.0), (b - origin).max(0.0));
                let k = beta + 1.0;
                scale * (x1.powf(k) - x0.powf(k)) / k
            }
            LawKind::NegPower { beta, scale, pole } => {
                let (x_hi, x_lo) = ((pole - a).max(0.0), (pole - b).max(0.0));
                neg_power_mass(beta, scale, x_lo, x_hi)
            }
            LawKind::Exp { lambda, scale } => {
                if a == f64::NEG_INFINITY {
                    scale / lambda * (lambda * b).exp()
                } else {
                    scale / lambda * (lambda * b).exp() * -(-(lambda * (b - a))).exp_m1()
                }
            }
            LawKind::Table { ref cdf, .. } => (cdf.eval(b) - cdf.eval(a)).max(0.0),
        }
    }

    /// Weight in `[a, b]` at probability level `u` of the restricted law.
    pub fn quantile(&self, a: f64, b: f64, u: f64) -> f64 {
        let h = match self.kind {
            LawKind::Power { beta, origin, .. } => {
                let k = beta + 1.0;
                let (x0, x1) = ((a - origin).max(0.0), (b - origin).max(0.0));
                let (g0, g1) = (x0.powf(k), x1.powf(k));
                origin + (g0 + u * (g1 - g0)).powf(1.0 / k)
            }
            LawKind::NegPower { beta, pole, .. } => {
                // In x = pole − h the law has density ∝ x^{−β} on [x_lo, x_hi]
                // and the level in x is 1 − u.
                let (x_hi, x_lo) = ((pole - a).max(0.0), (pole - b).max(0.0));
                let k = 1.0 - beta;
                let v = 1.0 - u;
                let x = if k.abs() < 1e-12 {
                    x_lo * (x_hi / x_lo).powf(v)
                } else if x_hi.is_infinite() {
                    // k < 0 here, otherwise the mass is infinite.
                    x_lo * u.powf(1.0 / k)
                } else {
                    let (g0, g1) = (x_lo.powf(k), x_hi.powf(k));
                    (g0 + v * (g1 - g0)).powf(1.0 / k)
                };
                pole - x
            }
            LawKind::Exp { lambda, .. } => {
                if a == f64::NEG_INFINITY {
                    b + u.ln() / lambda
                } else {
                    let e = (-(lambda * (b - a))).exp();
                    b + (e + u * (1.0 - e)).ln() / lambda
                }
            }
            LawKind::Table { ref cdf, ref inv } => {
                let (c0, c1) = (cdf.eval(a), cdf.eval(b));
                inv.eval(c0 + u * (c1 - c0))
            }
        };
        h.clamp(a, b)
    }
}

fn neg_power_mass(beta: f64, scale: f64, x_lo: f64, x_hi: f64) -> f64 {
    let k = 1.0 - beta;
    if k.abs() < 1e-12 {
        return scale * (x_hi / x_lo).ln();
    }
    if x_hi.is_infinite() {
        return if k < 0.0 { scale * x_lo.powf(k) / -k } else { f64::INFINITY };
    }
    if x_lo == 0.0 && k <= 0.0 {
        return f64::INFINITY;
    }
    scale * (x_hi.powf(k) - x_lo.powf(k)) / k
}

/// `γ π^{d/2} I^{d/2+1} f(t)`: the expected number of sites strictly below a
/// downward paraboloid with apex height `t`.
pub fn expected_count_below_paraboloid(f: &DensityModel, gamma: f64, d: usize, t: f64) -> Result<f64> {
    let half = d as f64 / 2.0;
    let i = FracEvaluator::new(f.clone()).integral(half + 1.0, t)?;
    Ok(gamma * PI.powf(half) * i)
}

/// Smallest `t` with `expected_count_below_paraboloid(t) ≥ target`.
pub fn paraboloid_level(f: &DensityModel, gamma: f64, d: usize, target: f64) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::InvalidModel(format!("paraboloid count target {target} must be positive")));
    }
    let count = |t: f64| expected_count_below_paraboloid(f, gamma, d, t);
    if let Family::Exponential { lambda, scale } = *f.family() {
        let half = d as f64 / 2.0;
        let c = gamma * PI.powf(half) * scale * lambda.powf(-(half + 1.0));
        return Ok((target / c).ln() / lambda);
    }
    let s0 = f.support().0;
    // Counts blow up only at the end of a left-open interval; a bounded
    // support on a right half-line keeps growing past its end.
    let s1 = f.interval().upper();
    let (mut lo, mut hi);
    if s1.is_finite() {
        // Approach the upper end geometrically, then move down until below.
        let mut gap = 1.0;
        hi = s1 - gap;
        while count(hi)? < target {
            gap *= 0.5;
            if gap < 1e-300 {
                return Err(Error::NonConvergence {
                    estimate: hi,
                    error: gap,
                });
            }
            hi = s1 - gap;
        }
        let mut g = gap;
        lo = s1 - g;
        while count(lo)? >= target {
            g *= 2.0;
            if g > 1e300 {
                return Ok(lo);
            }
            lo = s1 - g;
        }
    } else {
        let base = if s0.is_finite() { s0 } else { 0.0 };
        let mut step = 1.0;
        hi = base + step;
        while count(hi)? < target {
            step *= 2.0;
            if step > 1e300 {
                return Err(Error::NonConvergence {
                    estimate: hi,
                    error: step,
                });
            }
            hi = base + step;
        }
        if s0.is_finite() {
            lo = s0;
        } else {
            let mut g = 1.0;
            lo = base - g;
            while count(lo)? >= target {
                g *= 2.0;
                lo = base - g;
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Expected number of sites with weight below `floor` whose power at some
/// point of `inner` is at most `cap`, bounded above by the box-dilation
/// volume.
pub fn residual_bias(f: &DensityModel, gamma: f64, inner: &Aabb, cap: f64, floor: f64) -> Result<f64> {
    if floor <= f.support().0 {
        return Ok(0.0);
    }
    let integrand = |h: f64| {
        let fh = f.eval(h);
        if fh == 0.0 {
            return 0.0;
        }
        fh * inner.dilate((cap - h).max(0.0).sqrt()).volume()
    };
    let scale = (cap - floor).abs().max(1.0);
    let r = quad::from_neg_infinity(integrand, floor, scale, &QuadOptions::with_tol(1e-8))?;
    Ok(gamma * r.value)
}

/// Highest floor whose residual bias stays within `budget`. Densities with a
/// finite lower support bound return that bound.
pub fn weight_floor(f: &DensityModel, gamma: f64, inner: &Aabb, cap: f64, budget: f64) -> Result<f64> {
    let s0 = f.support().0;
    if s0.is_finite() {
        return Ok(s0);
    }
    let mut gap = 1.0;
    let mut floor = cap - gap;
    while residual_bias(f, gamma, inner, cap, floor)? > budget {
        gap *= 2.0;
        if gap > 1e12 {
            return Err(Error::InfiniteMeasure(
                "residual bias does not vanish as the floor decreases; set the floor explicitly".into(),
            ));
        }
        floor = cap - gap;
    }
    // Tighten between floor and the previous candidate.
    let (mut lo, mut hi) = (floor, cap - gap / 2.0);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if residual_bias(f, gamma, inner, cap, mid)? > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// Draws the process on `window`. Deterministic given `seed`.
pub fn sample_ppp(f: &DensityModel, gamma: f64, window: &SimulationWindow, seed: u64) -> Result<PointSample> {
    PppSampler::new(f, gamma, window)?.sample(seed)
}

/// Reusable sampler for one model and window; the weight law (a table for
/// custom densities) is built once.
#[derive(Clone, Debug)]
pub struct PppSampler {
    gamma: f64,
    window: SimulationWindow,
    law: WeightLaw,
    support: (f64, f64),
    model_hash: String,
}

impl PppSampler {
    pub fn new(f: &DensityModel, gamma: f64, window: &SimulationWindow) -> Result<Self> {
        window.validate()?;
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidModel(format!("intensity {gamma} must be positive")));
        }
        Ok(Self {
            gamma,
            window: *window,
            law: WeightLaw::new(f, window.weight_floor, window.weight_cap)?,
            support: f.support(),
            model_hash: f.model_hash(),
        })
    }

    pub fn sample(&self, seed: u64) -> Result<PointSample> {
        let (s0, s1) = self.support;
        let mut rng = rng::rng_from(seed);
        let mut points = Vec::new();
        for band in &self.window.bands() {
            let (a, b) = (band.h_lo.max(s0), band.h_hi.min(s1));
            if !(a < b) {
                continue;
            }
            let mean = self.gamma * band.region.volume() * self.law.mass(a, b);
            if !mean.is_finite() {
                return Err(Error::InfiniteMeasure(format!(
                    "weights in [{a}, {b}] carry infinite mass; lower the cap"
                )));
            }
            if mean > MAX_MEAN {
                return Err(Error::InfiniteMeasure(format!("expected {mean:e} sites exceeds the sampler limit")));
            }
            let n = if mean > 0.0 {
                Poisson::new(mean).map_err(|e| Error::NonFinite(e.to_string()))?.sample(&mut rng) as usize
            } else {
                0
            };
            points.reserve(n);
            for _ in 0..n {
                let v = band.region.sample(&mut rng);
                let h = self.law.quantile(a, b, rng.random::<f64>());
                points.push(WeightedPoint { v, h });
            }
        }
        Ok(PointSample {
            d: self.window.d(),
            points,
            seed,
            window: self.window,
            gamma: self.gamma,
            model_hash: self.model_hash.clone(),
        })
    }
}

/// Adds the sites of a fresh draw on `larger` that fall outside the region
/// already covered by `sample`, giving a sample of the process on `larger`.
pub fn extend_sample(f: &DensityModel, sample: &PointSample, larger: &SimulationWindow, seed: u64) -> Result<PointSample> {
    let fresh = sample_ppp(f, sample.gamma, larger, seed)?;
    let mut points = sample.points.clone();
    points.extend(fresh.points.into_iter().filter(|p| !sample.window.contains(p)));
    Ok(PointSample {
        points,
        window: *larger,
        ..sample.clone()
    })
}

/// Upper bound on the largest minimal power over the inner box, within
/// `rel_tol` of the exact value.
///
/// Branch and bound over box cells: on a cell of radius `r` around `c`, every
/// site `i` bounds the minimal power by `pow(c, i) + 2‖c − v_i‖r + r²`, and
/// the exact minimal power at cell centers gives a lower bound on the maximum.
/// Cells whose bound cannot exceed the running maximum are dropped; the rest
/// are split.
pub fn coverage_cap(points: &PointSample, rel_tol: f64) -> Result<f64> {
    if points.points.is_empty() {
        return Err(Error::Degenerate("coverage of an empty sample".into()));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidWindow(format!("coverage tolerance {rel_tol} must be positive")));
    }
    let d = points.d;
    let inner = &points.window.inner;
    let index = PowerIndex::new(&points.points, d);
    let sites = &points.points;
    let max_side = (0..d).map(|k| inner.side(k)).fold(0.0, f64::max);
    let min_radius = 1e-9 * max_side.max(f64::MIN_POSITIVE);

    // Start with about one cell per site.
    let step = (inner.volume() / sites.len() as f64).powf(1.0 / d as f64).max(max_side / 2048.0);
    let counts: Vec<usize> = (0..d).map(|k| ((inner.side(k) / step).ceil() as usize).max(1)).collect();
    let half0: Vec<f64> = (0..d).map(|k| 0.5 * inner.side(k) / counts[k] as f64).collect();
    let total: usize = counts.iter().product();
    let mut cells: Vec<([f64; MAX_DIM], [f64; MAX_DIM])> = (0..total)
        .map(|idx| {
            let (mut rem, mut c, mut h) = (idx, [0.0; MAX_DIM], [0.0; MAX_DIM]);
            for k in 0..d {
                let i = rem % counts[k];
                rem /= counts[k];
                c[k] = inner.lo[k] + (2 * i + 1) as f64 * half0[k];
                h[k] = half0[k];
            }
            (c, h)
        })
        .collect();

    let eval = |c: &[f64], h: &[f64]| -> (f64, f64) {
        let r = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        let bound = |i: usize| {
            let dist = crate::geometry::dist2(c, &sites[i].v[..d]).sqrt();
            crate::geometry::pow(c, &sites[i]) + 2.0 * dist * r + r * r
        };
        let (i, exact) = index.nearest(c).expect("non-empty index");
        let first = bound(i);
        let ub = index.within(c, first).into_iter().map(bound).fold(first, f64::min);
        (exact, ub)
    };

    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::NEG_INFINITY;
    while !cells.is_empty() {
        let evaluated: Vec<(f64, f64)> = cells.par_iter().map(|(c, h)| eval(&c[..d], &h[..d])).collect();
        lower = evaluated.iter().map(|e| e.0).fold(lower, f64::max);
        let slack = rel_tol * lower.abs() + 1e-14 * (1.0 + lower.abs());
        let mut next = Vec::new();
        for ((c, h), (_, ub)) in cells.iter().zip(&evaluated) {
            let r = h[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
            if *ub <= lower + slack || r <= min_radius {
                upper = upper.max(*ub);
                continue;
            }
            for child in 0..(1usize << d) {
                let (mut cc, mut hh) = (*c, *h);
                for k in 0..d {
                    hh[k] = 0.5 * h[k];
                    cc[k] += if child >> k & 1 == 1 { hh[k] } else { -hh[k] };
                }
                next.push((cc, hh));
            }
        }
        cells = next;
    }
    Ok(upper.max(lower))
}

#[derive(Clone, Copy, Debug)]
pub struct GenerateOptions {
    /// Expected paraboloid count that fixes the first-pass cap.
    pub pass1_count: f64,
    /// Extra expected count added on top of the first-pass coverage level.
    pub pass2_headroom: f64,
    /// Relative tolerance of the coverage computation.
    pub coverage_tol: f64,
    pub bias_budget: f64,
    pub max_attempts: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            pass1_count: 30.0,
            pass2_headroom: 10.0,
            coverage_tol: 1e-6,
            bias_budget: BIAS_BUDGET,
            max_attempts: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub sample: PointSample,
    pub pass1_cap: f64,
    pub pass1_coverage: f64,
    /// Coverage level of the returned sample, at most its weight cap.
    pub coverage: f64,
    pub attempts: usize,
    pub residual_bias: f64,
}

/// Two-pass generation: a first draw under a generous cap estimates the
/// coverage level, and a second independent draw uses a cap just above it.
/// The returned sample satisfies `coverage ≤ weight_cap`.
pub fn generate_two_pass(f: &DensityModel, gamma: f64, inner: &Aabb, seed: u64, opts: &GenerateOptions) -> Result<Generated> {
    let d = inner.d;
    let count = |t: f64| expected_count_below_paraboloid(f, gamma, d, t);
    let level = |c: f64| paraboloid_level(f, gamma, d, c);
    let mut cap1 = level(opts.pass1_count)?;
    let draw = |cap: f64, path: &[u64]| -> Result<(PointSample, f64)> {
        let floor = weight_floor(f, gamma, inner, cap, opts.bias_budget)?;
        let window = SimulationWindow::layered(*inner, cap, floor)?;
        let sample = sample_ppp(f, gamma, &window, rng::sub_seed(seed, path))?;
        let cov = if sample.points.is_empty() { f64::INFINITY } else { coverage_cap(&sample, opts.coverage_tol)? };
        Ok((sample, cov))
    };
    let mut attempts = 0;
    let (pass1_coverage, pass1_cap) = loop {
        attempts += 1;
        let (_, cov) = draw(cap1, &[rng::tag::PASS1, attempts as u64])?;
        if cov <= cap1 {
            break (cov, cap1);
        }
        if attempts >= opts.max_attempts {
            return Err(Error::Degenerate(format!("first pass failed to cover the window after {attempts} attempts")));
        }
        cap1 = level(2.0 * count(cap1)?)?;
    };
    let mut cap2 = level(count(pass1_coverage)? + opts.pass2_headroom)?.max(pass1_coverage);
    let mut tries = 0;
    loop {
        tries += 1;
        attempts += 1;
        let (sample, cov) = draw(cap2, &[rng::tag::PASS2, tries as u64])?;
        if cov <= cap2 {
            let bias = residual_bias(f, gamma, inner, cap2, sample.window.weight_floor)?;
            return Ok(Generated {
                sample,
                pass1_cap,
                pass1_coverage,
                coverage: cov,
                attempts,
                residual_bias: bias,
            });
        }
        if tries >= opts.max_attempts {
            return Err(Error::Degenerate(format!("second pass failed to cover the window after {tries} attempts")));
        }
        cap2 = level(count(cap2)? + opts.pass2_headroom)?;
    }
}

/// Header record of a point dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpHeader {
    pub seed: u64,
    pub window: SimulationWindow,
    pub model_hash: String,
    pub gamma: f64,
    pub d: usize,
    pub count: usize,
}

#[derive(Serialize)]
struct DumpPoint<'a> {
    v: &'a [f64],
    h: f64,
}

/// JSON lines: a header, then one `{"v": [...], "h": ...}` record per site.
pub fn write_jsonl<W: Write>(sample: &PointSample, mut out: W) -> Result<()> {
    let header = DumpHeader {
        seed: sample.seed,
        window: sample.window,
        model_hash: sample.model_hash.clone(),
        gamma: sample.gamma,
        d: sample.d,
        count: sample.points.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for p in &sample.points {
        serde_json::to_writer(&mut out, &DumpPoint { v: &p.v[..sample.d], h: p.h })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{CustomDensity, IntervalSpec};
    use crate::geometry::pow;
    use approx::assert_relative_eq;

    #[test]
    fn beta_count_below_paraboloid() {
        let f = DensityModel::beta(2, 1.0).unwrap();
        assert_relative_eq!(expected_count_below_paraboloid(&f, 1.0, 2, 1.0).unwrap(), 0.3125, max_relative = 1e-12);
        assert_eq!(expected_count_below_paraboloid(&f, 1.0, 2, -0.5).unwrap(), 0.0);
        let g = DensityModel::beta_prime(2, 2.5).unwrap();
        assert_eq!(expected_count_below_paraboloid(&g, 1.0, 2, 0.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn count_matches_planar_quadrature() {
        // ∫∫ 1(h ≤ t − ‖v‖²) f(h) dh dv = ∫_0^∞ 2πr F(t − r²) dr with F the CDF.
        let f = DensityModel::beta(2, 1.0).unwrap();
        let law = WeightLaw::new(&f, 0.0, 10.0).unwrap();
        for t in [0.5f64, 1.0, 2.0] {
            let r = quad::finite(|r| 2.0 * PI * r * law.mass(0.0, t - r * r), 0.0, t.sqrt(), &QuadOptions::default()).unwrap();
            assert_relative_eq!(r.value, expected_count_below_paraboloid(&f, 1.0, 2, t).unwrap(), max_relative = 1e-9);
        }
    }

    #[test]
    fn level_of_bounded_support_passes_its_end() {
        let f = crate::density::registry(
            "box",
            &[("lo".to_string(), 0.0), ("hi".to_string(), 1.0)].into_iter().collect(),
            IntervalSpec::RightHalfLine { a: 0.0 },
        )
        .unwrap();
        let t = paraboloid_level(&f, 1.0, 2, 30.0).unwrap();
        assert!(t > 1.0);
        assert_relative_eq!(expected_count_below_paraboloid(&f, 1.0, 2, t).unwrap(), 30.0, max_relative = 1e-6);
    }

    #[test]
    fn level_inverts_count() {
        for f in [
            DensityModel::beta(2, 1.0).unwrap(),
            DensityModel::beta_prime(2, 2.5).unwrap(),
            DensityModel::gaussian(1.0).unwrap(),
        ] {
            for target in [0.5, 30.0] {
                let t = paraboloid_level(&f, 1.0, 2, target).unwrap();
                assert_relative_eq!(expected_count_below_paraboloid(&f, 1.0, 2, t).unwrap(), target, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn window_rejects_empty_boxes() {
        assert!(matches!(Aabb::new(&[0.0, 1.0], &[1.0, 0.0]), Err(Error::InvalidWindow(_))));
        let inner = Aabb::centered(2, 1.0).unwrap();
        assert!(SimulationWindow::layered(inner, 1.0, 2.0).is_err());
    }

    #[test]
    fn quantiles_stay_in_band_and_invert_mass() {
        let laws = [
            (DensityModel::beta(2, 1.0).unwrap(), 0.2, 1.7),
            (DensityModel::beta_prime(2, 2.5).unwrap(), -4.0, -0.1),
            (DensityModel::gaussian(0.7).unwrap(), -3.0, 2.0),
            (DensityModel::neg_power_law(1.0, 1.0, 0.0).unwrap(), -4.0, -0.1),
        ];
        for (f, a, b) in laws {
            let law = WeightLaw::new(&f, a, b).unwrap();
            let total = law.mass(a, b);
            for u in [0.0, 0.1, 0.5, 0.9, 1.0] {
                let h = law.quantile(a, b, u);
                assert!((a..=b).contains(&h));
                assert_relative_eq!(law.mass(a, h) / total, u, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn custom_table_matches_closed_form() {
        let closed = DensityModel::beta(2, 1.0).unwrap();
        let c = crate::density::beta_normalization(3, 1.0);
        let custom = DensityModel::custom(
            IntervalSpec::RightHalfLine { a: 0.0 },
            CustomDensity::new("linear", move |h| c * h).with_support(0.0, f64::INFINITY),
        )
        .unwrap();
        let (a, b) = (0.0, 2.0);
        let lc = WeightLaw::new(&closed, a, b).unwrap();
        let lt = WeightLaw::new(&custom, a, b).unwrap();
        assert_relative_eq!(lt.mass(0.3, 1.4), lc.mass(0.3, 1.4), max_relative = 1e-9);
        for u in [0.01, 0.3, 0.77, 0.99] {
            assert_relative_eq!(lt.quantile(0.3, 1.4, u), lc.quantile(0.3, 1.4, u), max_relative = 1e-6);
        }
    }

    #[test]
    fn unit_measure_example_is_reproducible() {
        let f = DensityModel::custom(
            IntervalSpec::RightHalfLine { a: 0.0 },
            CustomDensity::new("step", |_| 1.0).with_support(0.0, 1.0),
        )
        .unwrap();
        let inner = Aabb::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let w = SimulationWindow::uniform(inner, 0.0, 1.0, 0.0).unwrap();
        let sampler = PppSampler::new(&f, 1.0, &w).unwrap();
        let a = sampler.sample(99).unwrap();
        let b = sampler.sample(99).unwrap();
        assert_eq!(a.points, b.points);
        let counts: Vec<f64> = (0..4000).map(|s| sampler.sample(s).unwrap().points.len() as f64).collect();
        let (m, se) = crate::stats::mean_se(&counts);
        assert!((m - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn beta_mean_count_in_unit_box() {
        // N ~ Poisson(γ c_{3,1} ∫_0^1 h dh) = Poisson(15/(16π)).
        let f = DensityModel::beta(2, 1.0).unwrap();
        let inner = Aabb::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let w = SimulationWindow::uniform(inner, 0.0, 1.0, 0.0).unwrap();
        let target = 15.0 / (16.0 * PI);
        let counts: Vec<f64> = (0..10_000).map(|s| sample_ppp(&f, 1.0, &w, s).unwrap().points.len() as f64).collect();
        let (m, se) = crate::stats::mean_se(&counts);
        assert!((m - target).abs() < 3.0 * se, "{m} vs {target}");
        let disp = crate::stats::dispersion(&counts);
        assert!((0.94..=1.06).contains(&disp), "dispersion {disp}");
    }

    #[test]
    fn disjoint_boxes_are_uncorrelated() {
        let f = DensityModel::gaussian(1.0).unwrap();
        let inner = Aabb::new(&[0.0, 0.0], &[2.0, 1.0]).unwrap();
        let w = SimulationWindow::uniform(inner, 0.0, 1.0, -3.0).unwrap();
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for s in 0..5000 {
            let p = sample_ppp(&f, 1.0, &w, s).unwrap();
            left.push(p.points.iter().filter(|q| q.v[0] < 1.0).count() as f64);
            right.push(p.points.iter().filter(|q| q.v[0] >= 1.0).count() as f64);
        }
        let (c, se) = crate::stats::covariance_se(&left, &right);
        assert!(c.abs() < 3.0 * se, "covariance {c} ± {se}");
    }

    #[test]
    fn layered_bands_partition_weights() {
        let inner = Aabb::centered(2, 1.0).unwrap();
        let w = SimulationWindow::layered(inner, 3.0, -5.0).unwrap();
        let bands = w.bands();
        assert_eq!(bands.last().unwrap().h_lo, -5.0);
        assert_eq!(bands[0].h_hi, 3.0);
        for pair in bands.windows(2) {
            assert_eq!(pair[0].h_lo, pair[1].h_hi);
        }
        for b in &bands {
            let reach = (w.weight_cap - b.h_lo).sqrt();
            assert!((b.region.hi[0] - inner.hi[0] - reach).abs() < 1e-12);
        }
    }

    #[test]
    fn layered_sample_contains_influential_sites() {
        // Compare against a uniform sample of the same region bounds: the
        // layered window must contain every site that can reach power ≤ cap
        // in the inner box.
        let f = DensityModel::gaussian(1.0).unwrap();
        let inner = Aabb::centered(2, 0.5).unwrap();
        let w = SimulationWindow::layered(inner, 2.0, -6.0).unwrap();
        let s = sample_ppp(&f, 1.0, &w, 3).unwrap();
        for p in &s.points {
            assert!(w.contains(p));
        }
        let outer = SimulationWindow::uniform(inner, w.spatial_margin, 2.0, -6.0).unwrap();
        let u = sample_ppp(&f, 1.0, &outer, 4).unwrap();
        for p in &u.points {
            if inner.dist2(&p.v) + p.h <= 2.0 {
                assert!(w.contains(p));
            }
        }
    }

    #[test]
    fn floor_meets_bias_budget() {
        let inner = Aabb::centered(2, 2.0).unwrap();
        for f in [DensityModel::gaussian(1.0).unwrap(), DensityModel::beta_prime(2, 2.5).unwrap()] {
            let cap = paraboloid_level(&f, 1.0, 2, 30.0).unwrap();
            let floor = weight_floor(&f, 1.0, &inner, cap, 1e-4).unwrap();
            let b = residual_bias(&f, 1.0, &inner, cap, floor).unwrap();
            assert!(b <= 1e-4 && b > 1e-6, "bias {b}");
        }
        let beta = DensityModel::beta(2, 1.0).unwrap();
        assert_eq!(weight_floor(&beta, 1.0, &inner, 3.0, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn coverage_examples() {
        let inner = Aabb::centered(2, 1.0).unwrap();
        let window = SimulationWindow::uniform(inner, 0.0, 10.0, -1.0).unwrap();
        let sample = |pts: Vec<WeightedPoint>| PointSample {
            d: 2,
            points: pts,
            seed: 0,
            window,
            gamma: 1.0,
            model_hash: String::new(),
        };
        let single = sample(vec![WeightedPoint::new(&[0.0, 0.0], 0.0)]);
        let t = coverage_cap(&single, 1e-6).unwrap();
        assert!((2.0..=2.0 + 3e-6).contains(&t), "{t}");
        let pair = sample(vec![WeightedPoint::new(&[-1.0, 0.0], 0.0), WeightedPoint::new(&[1.0, 0.0], 0.0)]);
        // Worst points are the midline corners (0, ±1) with power 2.
        let t = coverage_cap(&pair, 1e-4).unwrap();
        assert!((2.0..=2.0 + 3e-4).contains(&t), "{t}");
    }

    #[test]
    fn two_pass_generation_covers() {
        let inner = Aabb::centered(2, 2.0).unwrap();
        for f in [
            DensityModel::beta(2, 1.0).unwrap(),
            DensityModel::beta_prime(2, 2.5).unwrap(),
            DensityModel::gaussian(1.0).unwrap(),
        ] {
            let g = generate_two_pass(&f, 1.0, &inner, 17, &GenerateOptions::default()).unwrap();
            assert!(g.coverage <= g.sample.window.weight_cap);
            assert!(g.residual_bias <= BIAS_BUDGET);
            let again = generate_two_pass(&f, 1.0, &inner, 17, &GenerateOptions::default()).unwrap();
            assert_eq!(g.sample.points, again.sample.points);
            // Every inner grid point is owned at power ≤ cap.
            let (nodes, _) = inner.grid(0.05).unwrap();
            let idx = PowerIndex::new(&g.sample.points, 2);
            for w in nodes {
                let (i, m) = idx.nearest(&w[..2]).unwrap();
                assert_eq!(m, pow(&w[..2], &g.sample.points[i]));
                assert!(m <= g.sample.window.weight_cap);
            }
        }
    }

    #[test]
    fn jsonl_dump_has_header_and_points() {
        let f = DensityModel::gaussian(1.0).unwrap();
        let inner = Aabb::centered(2, 0.5).unwrap();
        let w = SimulationWindow::layered(inner, 1.0, -4.0).unwrap();
        let s = sample_ppp(&f, 1.0, &w, 1).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: DumpHeader = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header.count, s.points.len());
        assert_eq!(header.window, w);
        let first: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(first["v"].as_array().unwrap().len(), 2);
        assert_eq!(text.lines().count(), s.points.len() + 1);
    }
}
