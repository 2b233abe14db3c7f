//! The ν-weighted typical cell of the dual tessellation: moment functionals,
//! normalization constants, volume moments, a direct sampler for the three
//! decomposable families and the harvest estimator over simulated
//! tessellations.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityModel, Family, IntervalSpec};
use crate::error::{Error, Result};
use crate::fractional::{frac_derivative, FracEvaluator, FracFunction};
use crate::geometry::build_regular_triangulation;
use crate::math::{factorial, gamma_ratio, ln_gamma};
use crate::ppp::{paraboloid_level, sample_ppp, weight_floor, Aabb, SimulationWindow};
use crate::quad::{self, QuadOptions};
use crate::rng::{self, tag};
use crate::stats::{jackknife_ratio, mean_se, MomentReport};
use crate::tessellation::{cell_statistics, CellStats};

/// `∏_{k=1}^{d} Γ((α+k)/2) / Γ(k/2)`.
pub fn gamma_product(d: usize, alpha: f64) -> f64 {
    (1..=d).map(|k| gamma_ratio((alpha + k as f64) / 2.0, k as f64 / 2.0)).product()
}

/// `J^α_{d,f}(p)`: the `α`-th moment integral of the parallelotope spanned by
/// `d` points with radial weight `f(p − ‖x‖²)`.
pub fn j_eval(f: &DensityModel, d: usize, alpha: f64, p: f64) -> Result<f64> {
    if !(alpha > -1.0) {
        return Err(Error::InvalidOrder(alpha));
    }
    let half = d as f64 / 2.0;
    let i = FracEvaluator::new(f.clone()).integral(half + alpha / 2.0, p)?;
    if i.is_infinite() {
        return Err(Error::Divergent(format!("I^{} f({p}) is infinite", half + alpha / 2.0)));
    }
    Ok(gamma_product(d, alpha) * (PI.powf(half) * i).powi(d as i32))
}

/// How a value of `K` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KKind {
    Exact,
    /// The upper bound, returned where the exact formula does not apply.
    Bound,
    MonteCarlo { std_error: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KValue {
    pub value: f64,
    pub kind: KKind,
}

/// Upper bound on `K^α_{d,f}(p)` from bounding the simplex volume by the
/// cones over its facets.
pub fn k_bound(f: &DensityModel, d: usize, alpha: f64, p: f64) -> Result<f64> {
    let half = d as f64 / 2.0;
    let ev = FracEvaluator::new(f.clone());
    let ia = ev.integral(half + alpha / 2.0, p)?;
    let i0 = ev.integral(half, p)?;
    if i0 == 0.0 || ia == 0.0 {
        return Ok(0.0);
    }
    let c = (d as f64 + 1.0).powf(alpha.max(1.0)) / factorial(d).powf(alpha)
        * PI.powf(half * (d as f64 + 1.0))
        * gamma_ratio(half + alpha / 2.0, half).powi(d as i32);
    Ok(c * ia.powi(d as i32) * i0)
}

/// `K^α_{d,f}` as a reusable function of `p`.
#[derive(Clone, Debug)]
pub struct KFunctional {
    d: usize,
    alpha: f64,
    f: DensityModel,
    form: KForm,
}

#[derive(Clone, Debug)]
enum KForm {
    /// `coef · G(p)` with `G` a closed-form function.
    Closed { coef: f64, g: FracFunction },
    /// `coef · D^{α/2}[(I^{(d+α)/2} f)^{d+1}](p)` by finite differences.
    Derivative { coef: f64, g: FracFunction },
    MonteCarlo { draws: usize, seed: u64 },
    /// The defining integral diverges.
    Infinite,
}

/// Default number of Monte-Carlo draws for `K` when no formula applies.
pub const K_MC_DRAWS: usize = 16_384;

impl KFunctional {
    pub fn new(f: &DensityModel, d: usize, alpha: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::Unsupported("K needs d ≥ 1".into()));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidOrder(alpha));
        }
        let half = d as f64 / 2.0;
        let n = (d + 1) as i32;
        let coef_d = PI.powf(half * (d as f64 + 1.0)) / factorial(d).powf(alpha) * gamma_product(d, alpha);
        let form = if alpha == 0.0 {
            match FracFunction::closed_of_model(f, half) {
                Some(g) => KForm::Closed {
                    coef: PI.powf(half * (d as f64 + 1.0)),
                    g: g.powi(n),
                },
                None if f.has_closed_form() => KForm::Infinite,
                None => KForm::Derivative {
                    coef: PI.powf(half * (d as f64 + 1.0)),
                    g: FracFunction::Integral {
                        model: f.clone(),
                        order: half,
                        tol: 1e-12,
                    }
                    .powi(n),
                },
            }
        } else if f.has_closed_form() {
            match FracFunction::closed_of_model(f, half + alpha / 2.0).and_then(|g| g.powi(n).closed_derivative(alpha / 2.0)) {
                Some(g) => KForm::Closed { coef: coef_d, g },
                None => KForm::Infinite,
            }
        } else if (alpha / 2.0).fract() == 0.0 {
            KForm::Derivative {
                coef: coef_d,
                g: FracFunction::Integral {
                    model: f.clone(),
                    order: half + alpha / 2.0,
                    tol: 1e-12,
                }
                .powi(n),
            }
        } else {
            KForm::MonteCarlo {
                draws: K_MC_DRAWS,
                seed: 0x4b5f_4d43,
            }
        };
        Ok(Self {
            d,
            alpha,
            f: f.clone(),
            form,
        })
    }

    pub fn with_mc_draws(mut self, draws: usize, seed: u64) -> Self {
        if let KForm::MonteCarlo { .. } = self.form {
            self.form = KForm::MonteCarlo { draws, seed };
        }
        self
    }

    pub fn is_finite_everywhere(&self) -> bool {
        !matches!(self.form, KForm::Infinite)
    }

    pub fn eval(&self, p: f64) -> Result<KValue> {
        let (lo, hi) = self.f.support();
        if p <= lo {
            return Ok(KValue {
                value: 0.0,
                kind: KKind::Exact,
            });
        }
        match &self.form {
            KForm::Closed { coef, g } => Ok(KValue {
                value: coef * g.eval(p),
                kind: KKind::Exact,
            }),
            KForm::Derivative { coef, g } => {
                let v = frac_derivative(g, self.alpha / 2.0, p, None)?;
                Ok(KValue {
                    value: coef * v.max(0.0),
                    kind: KKind::Exact,
                })
            }
            KForm::MonteCarlo { draws, seed } => {
                let (value, se) = k_monte_carlo(&self.f, self.d, self.alpha, p, *draws, *seed)?;
                Ok(KValue {
                    value,
                    kind: KKind::MonteCarlo { std_error: se },
                })
            }
            KForm::Infinite => {
                let b = if p < hi { k_bound(&self.f, self.d, self.alpha, p)? } else { f64::INFINITY };
                Ok(KValue {
                    value: b,
                    kind: KKind::Bound,
                })
            }
        }
    }
}

/// `K^α_{d,f}(p)`, the `α`-th moment integral of the simplex spanned by
/// `d + 1` points with radial weight `f(p − ‖x‖²)`.
pub fn k_eval(f: &DensityModel, d: usize, alpha: f64, p: f64) -> Result<KValue> {
    if d < 2 {
        return Err(Error::Unsupported("K is defined for d ≥ 2".into()));
    }
    KFunctional::new(f, d, alpha)?.eval(p)
}

/// Importance-sampled `K` with a scaled multivariate t proposal (3 degrees of
/// freedom). Common random numbers across `p` keep the estimate smooth in `p`.
fn k_monte_carlo(f: &DensityModel, d: usize, alpha: f64, p: f64, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let half = d as f64 / 2.0;
    let ev = FracEvaluator::new(f.clone());
    let i0 = ev.integral(half, p)?;
    let i1 = ev.integral(half + 1.0, p)?;
    if !(i0 > 0.0) {
        return Ok((0.0, 0.0));
    }
    // E‖X‖² under the normalized radial density, per coordinate.
    let sigma = (1.5 * i1 / i0).sqrt().max(1e-12);
    let dof = 3.0;
    let log_q = |z2: f64| {
        ln_gamma((dof + d as f64) / 2.0) - ln_gamma(dof / 2.0) - half * (dof * PI).ln() - d as f64 * sigma.ln()
            - (dof + d as f64) / 2.0 * (1.0 + z2 / dof).ln()
    };
    let chi = Gamma::new(dof / 2.0, 2.0 / dof).expect("valid gamma");
    let mut rng = rng::rng_from(seed);
    let mut vals = Vec::with_capacity(draws);
    let mut pts = vec![[0.0f64; 3]; d + 1];
    for _ in 0..draws {
        let mut w = 1.0;
        for pt in pts.iter_mut() {
            let scale = 1.0 / chi.sample(&mut rng).sqrt();
            let mut z2 = 0.0;
            for c in pt.iter_mut().take(d) {
                let z: f64 = rng.sample(StandardNormal);
                *c = sigma * z * scale;
                z2 += (z * scale).powi(2);
            }
            let r2: f64 = pt[..d].iter().map(|x| x * x).sum();
            let fx = f.eval(p - r2);
            w *= if fx > 0.0 { fx / log_q(z2).exp() } else { 0.0 };
        }
        vals.push(if w > 0.0 { simplex_volume(&pts, d).powf(alpha) * w } else { 0.0 });
    }
    let (m, se) = mean_se(&vals);
    Ok((m, se))
}

/// Volume of the simplex with `d + 1` vertices in `ℝ^d`, `d ≤ 3`.
pub fn simplex_volume(pts: &[[f64; 3]], d: usize) -> f64 {
    let e = |i: usize, k: usize| pts[i][k] - pts[0][k];
    match d {
        1 => e(1, 0).abs(),
        2 => 0.5 * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0)).abs(),
        3 => {
            let det = e(1, 0) * (e(2, 1) * e(3, 2) - e(2, 2) * e(3, 1)) - e(1, 1) * (e(2, 0) * e(3, 2) - e(2, 2) * e(3, 0))
                + e(1, 2) * (e(2, 0) * e(3, 1) - e(2, 1) * e(3, 0));
            det.abs() / 6.0
        }
        _ => f64::NAN,
    }
}

fn normalizer(f: &DensityModel, d: usize, p: f64) -> Result<f64> {
    let i = FracEvaluator::new(f.clone()).integral(d as f64 / 2.0, p)?;
    if !(i > 0.0) || !i.is_finite() {
        return Err(Error::Degenerate(format!("I^{} f({p}) = {i} is not in (0, ∞)", d as f64 / 2.0)));
    }
    Ok(PI.powf(d as f64 / 2.0) * i)
}

/// `E Δ_d^α` for i.i.d. points with density proportional to `f(p − ‖x‖²)`.
pub fn simplex_moment(f: &DensityModel, d: usize, alpha: f64, p: f64) -> Result<f64> {
    let z = normalizer(f, d, p)?;
    let k = k_eval(f, d, alpha, p)?;
    if k.kind == KKind::Bound {
        return Err(Error::Divergent(format!("E Δ^{alpha} needs a finite fractional integral at {p}")));
    }
    Ok(k.value / z.powi(d as i32 + 1))
}

/// `E ∇_d^α` for i.i.d. points with density proportional to `f(p − ‖x‖²)`.
pub fn parallelotope_moment(f: &DensityModel, d: usize, alpha: f64, p: f64) -> Result<f64> {
    let z = normalizer(f, d, p)?;
    Ok(j_eval(f, d, alpha, p)? / z.powi(d as i32))
}

/// Closed-form `E Δ_d^α` for `f(t) = t^β` on `(0, ∞)`.
pub fn beta_simplex_moment(d: usize, alpha: f64, beta: f64, p: f64) -> f64 {
    let (df, n) = (d as f64, (d + 1) as f64);
    let log = alpha * df / 2.0 * p.ln() - alpha * factorial(d).ln()
        + n * (ln_gamma(df / 2.0 + beta + 1.0) - ln_gamma((df + alpha) / 2.0 + beta + 1.0))
        + ln_gamma(n * (df + alpha) / 2.0 + n * beta + 1.0)
        - ln_gamma((df * n + alpha * df) / 2.0 + n * beta + 1.0);
    gamma_product(d, alpha) * log.exp()
}

/// Parameters of the ν-weighted typical cell.
#[derive(Clone, Debug)]
pub struct TypicalCellSpec {
    pub f: DensityModel,
    pub gamma: f64,
    pub nu: f64,
    pub d: usize,
}

impl TypicalCellSpec {
    pub fn new(f: DensityModel, gamma: f64, nu: f64, d: usize) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidModel(format!("intensity gamma = {gamma} must be positive")));
        }
        if !nu.is_finite() {
            return Err(Error::InvalidModel(format!("weight exponent nu = {nu} must be finite")));
        }
        if d < 2 {
            return Err(Error::Unsupported("typical cells need d ≥ 2".into()));
        }
        Ok(Self { f, gamma, nu, d })
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        Self { nu, ..self.clone() }
    }
}

/// Count levels splitting the apex-height integrals into pieces.
const PIECE_COUNTS: [f64; 9] = [1e-6, 1e-3, 0.03, 0.3, 1.0, 3.0, 10.0, 30.0, 80.0];

/// `∫_E e^{−γπ^{d/2} I^{d/2+1}f(p)} K^a(p) h(p) dp` split at paraboloid
/// levels, restricted to `p ≤ upper`.
fn apex_integral<H>(spec: &TypicalCellSpec, a: f64, upper: f64, h: H, tol: f64) -> Result<f64>
where
    H: Fn(f64) -> f64 + Sync,
{
    let kf = KFunctional::new(&spec.f, spec.d, a)?;
    if !kf.is_finite_everywhere() {
        return Ok(f64::INFINITY);
    }
    let d = spec.d;
    let half = d as f64 / 2.0;
    let ev = FracEvaluator::new(spec.f.clone());
    let integrand = |p: f64| -> f64 {
        let u = match ev.integral(half + 1.0, p) {
            Ok(u) => spec.gamma * PI.powf(half) * u,
            Err(_) => return f64::NAN,
        };
        let damp = (-u).exp();
        if damp == 0.0 {
            return 0.0;
        }
        let k = match kf.eval(p) {
            Ok(k) => k.value,
            Err(_) => return f64::NAN,
        };
        if k == 0.0 {
            return 0.0;
        }
        damp * k * h(p)
    };
    let (lo, hi) = spec.f.support();
    let mut cuts = Vec::new();
    for c in PIECE_COUNTS {
        let t = paraboloid_level(&spec.f, spec.gamma, d, c)?;
        if t > lo && t < hi && cuts.last().is_none_or(|&l: &f64| t > l) {
            cuts.push(t);
        }
    }
    let hi = hi.min(upper);
    cuts.retain(|&t| t < hi);
    let opts = QuadOptions {
        tol,
        abs_tol: 1e-300,
        max_subdivisions: 200,
    };
    let mut edges = vec![lo];
    edges.extend(cuts.iter().copied());
    edges.push(hi);
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a0, b0) = (w[0], w[1]);
        if !(b0 > a0) {
            continue;
        }
        let scale = if cuts.len() >= 2 { (cuts[1] - cuts[0]).abs().max((cuts[cuts.len() - 1] - cuts[0]).abs() / 8.0) } else { 1.0 };
        let scale = if a0.is_finite() && b0.is_infinite() {
            (a0.abs()).max(scale)
        } else if a0.is_infinite() && b0.is_finite() {
            b0.abs().max(scale)
        } else {
            scale
        };
        let r = quad::interval(integrand, a0, b0, 0.0, scale, &opts)?;
        total += r.value;
    }
    Ok(total)
}

/// Prefactor of the normalization, `2^d γ^{d+1} / (d + 1)`.
pub fn normalization_prefactor(d: usize, gamma: f64) -> f64 {
    2f64.powi(d as i32) * gamma.powi(d as i32 + 1) / (d as f64 + 1.0)
}

/// `α(f, γ, ν)`: the normalization of the ν-weighted typical cell, equal to
/// the intensity of dual simplices weighted by `Vol^ν`. Returns `+∞` when
/// the defining integral diverges.
pub fn normalization_alpha(spec: &TypicalCellSpec) -> Result<f64> {
    if spec.nu < -1.0 {
        return Err(Error::InvalidOrder(spec.nu));
    }
    let v = apex_integral(spec, spec.nu + 1.0, f64::INFINITY, |_| 1.0, 1e-11)?;
    Ok(normalization_prefactor(spec.d, spec.gamma) * v)
}

/// `E Vol(Z_ν)^s = α(f, γ, ν + s) / α(f, γ, ν)`.
pub fn volume_moment(spec: &TypicalCellSpec, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(1.0);
    }
    let den = normalization_alpha(spec)?;
    let num = normalization_alpha(&spec.with_nu(spec.nu + s))?;
    if !den.is_finite() || !num.is_finite() {
        return Err(Error::Divergent(format!(
            "volume moment s = {s} at nu = {} needs finite normalizations (got {num}, {den})",
            spec.nu
        )));
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate("zero normalization".into()));
    }
    Ok(num / den)
}

/// Apex height below which a fraction `q` of the `Vol^{a−1}`-weighted typical
/// cells lie.
pub fn apex_height_quantile(spec: &TypicalCellSpec, a: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidModel(format!("quantile level {q} must lie in (0, 1)")));
    }
    let tol = 1e-9;
    let total = apex_integral(spec, a, f64::INFINITY, |_| 1.0, tol)?;
    if !total.is_finite() {
        return Err(Error::Divergent(format!("apex-height law with weight exponent {a} is not finite")));
    }
    let mass = |t: f64| apex_integral(spec, a, t, |_| 1.0, tol).map(|m| m / total);
    let (lo, hi) = spec.f.support();
    let mut a0 = paraboloid_level(&spec.f, spec.gamma, spec.d, 1.0)?;
    let mut step = 1.0f64.max(a0.abs());
    let mut b0 = a0;
    while mass(b0)? < q {
        let next = b0 + step;
        b0 = if next >= hi { 0.5 * (b0 + hi) } else { next };
        step *= 2.0;
    }
    while mass(a0)? > q {
        step = step.max(a0.abs());
        let next = a0 - step;
        a0 = if next <= lo { 0.5 * (a0 + lo) } else { next };
    }
    for _ in 0..100 {
        let m = 0.5 * (a0 + b0);
        if mass(m)? < q {
            a0 = m;
        } else {
            b0 = m;
        }
        if b0 - a0 <= 1e-10 * (1.0 + b0.abs()) {
            break;
        }
    }
    Ok(b0)
}

/// Analytic identity behind the first finiteness case: the integral over `E`
/// of `e^{−γπ^{d/2} I^{d/2+1}f} (I^{d/2+1}f)^d I^{d/2}f` equals
/// `(γπ^{d/2})^{−d−1} d!`. Returns `(quadrature, closed form)`.
pub fn nu_one_identity(f: &DensityModel, gamma: f64, d: usize) -> Result<(f64, f64)> {
    let spec = TypicalCellSpec::new(f.clone(), gamma, 1.0, d)?;
    let half = d as f64 / 2.0;
    let ev = FracEvaluator::new(f.clone());
    let ratio = |p: f64| -> f64 {
        // (I^{d/2+1} f)^d · I^{d/2} f divided by K^0 = π^{d(d+1)/2}(I^{d/2}f)^{d+1}.
        let (Ok(i1), Ok(i0)) = (ev.integral(half + 1.0, p), ev.integral(half, p)) else {
            return f64::NAN;
        };
        if i0 == 0.0 {
            return 0.0;
        }
        (i1 / i0).powi(d as i32) / PI.powf(half * (d as f64 + 1.0))
    };
    let v = apex_integral(&spec, 0.0, f64::INFINITY, ratio, 1e-11)?;
    let target = (gamma * PI.powf(half)).powi(-(d as i32) - 1) * factorial(d);
    Ok((v, target))
}

/// Which sufficient condition guarantees a finite normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinitenessCase {
    /// `ν = 1`.
    I,
    /// Integrable `f` and `−1 ≤ ν ≤ 1`.
    II,
    /// Regular variation at `+∞` on a right half-line and `ν ≥ −1`.
    III,
    /// Regular variation at the pole on a left half-line with the order
    /// bound on `ν`.
    IV,
    /// No sufficient condition applies; exponential families can be
    /// verified directly.
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinitenessReport {
    pub case: FinitenessCase,
    /// The weights are exponential, so finiteness follows by direct
    /// computation.
    pub direct_verification: bool,
}

impl FinitenessReport {
    pub fn finite(&self) -> bool {
        self.case != FinitenessCase::Unknown || self.direct_verification
    }
}

pub fn finiteness_check(f: &DensityModel, nu: f64, d: usize) -> FinitenessReport {
    let df = d as f64;
    let direct = matches!(f.family(), Family::Exponential { .. });
    let report = |case| FinitenessReport {
        case,
        direct_verification: direct,
    };
    if !(nu >= -1.0) {
        return report(FinitenessCase::Unknown);
    }
    if nu == 1.0 {
        return report(FinitenessCase::I);
    }
    let integrable = match f.family() {
        Family::Custom(c) => c.integrable,
        _ => false,
    } || f.is_truncated();
    if integrable && nu <= 1.0 {
        return report(FinitenessCase::II);
    }
    let (right_index, left_index) = match f.family() {
        Family::PowerLaw { beta, .. } => (Some(*beta), None),
        Family::NegPowerLaw { beta, .. } => (None, Some(*beta)),
        Family::Exponential { .. } => (None, None),
        Family::Custom(c) => match (f.interval(), c.regular_variation) {
            (IntervalSpec::RightHalfLine { .. }, Some(rv)) => (Some(rv.index), None),
            (IntervalSpec::LeftOpenHalfLine { .. }, Some(rv)) => (None, Some(rv.index)),
            _ => (None, None),
        },
    };
    if let Some(b) = right_index {
        if b > -1.0 {
            return report(FinitenessCase::III);
        }
    }
    if let Some(b) = left_index {
        // I^α f is finite exactly for α < β, so the bound on ν is
        // 2·min(α, β) − d − 1 with α arbitrarily close to β.
        if b > df / 2.0 + 1.0 && nu < 2.0 * b - df - 1.0 {
            return report(FinitenessCase::IV);
        }
    }
    report(FinitenessCase::Unknown)
}

/// Canonical decomposition `f(p − φ(p)² s²) = f(p) ψ(s²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Decomposition {
    /// `φ(p) = √(p − origin)`, `ψ(x) = (1 − x)^β 1(x ≤ 1)`.
    Beta { beta: f64, origin: f64 },
    /// `φ(p) = √(pole − p)`, `ψ(x) = (1 + x)^{−β}`.
    BetaPrime { beta: f64, pole: f64 },
    /// `φ ≡ 1`, `ψ(x) = e^{−λx}`.
    Gaussian { lambda: f64 },
}

impl Decomposition {
    pub fn of(f: &DensityModel) -> Option<Self> {
        match *f.family() {
            Family::PowerLaw { beta, origin, .. } => Some(Decomposition::Beta { beta, origin }),
            Family::NegPowerLaw { beta, pole, .. } => Some(Decomposition::BetaPrime { beta, pole }),
            Family::Exponential { lambda, .. } => Some(Decomposition::Gaussian { lambda }),
            Family::Custom(_) => None,
        }
    }

    pub fn phi(&self, p: f64) -> f64 {
        match *self {
            Decomposition::Beta { origin, .. } => (p - origin).max(0.0).sqrt(),
            Decomposition::BetaPrime { pole, .. } => (pole - p).max(0.0).sqrt(),
            Decomposition::Gaussian { .. } => 1.0,
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        match *self {
            Decomposition::Beta { beta, .. } => {
                if x <= 1.0 {
                    (1.0 - x).powf(beta)
                } else {
                    0.0
                }
            }
            Decomposition::BetaPrime { beta, .. } => (1.0 + x).powf(-beta),
            Decomposition::Gaussian { lambda } => (-lambda * x).exp(),
        }
    }
}

/// Largest `|f(p − φ(p)²s²) − f(p)ψ(s²)| / (1 + |f(p)|)` over the grid.
pub fn decomposition_check<P, S>(f: &DensityModel, phi: P, psi: S, grid: &[(f64, f64)]) -> f64
where
    P: Fn(f64) -> f64,
    S: Fn(f64) -> f64,
{
    grid.iter()
        .map(|&(p, s)| {
            let fp = f.eval(p);
            let ph = phi(p);
            (f.eval(p - ph * ph * s * s) - fp * psi(s * s)).abs() / (1.0 + fp.abs())
        })
        .fold(0.0, f64::max)
}

/// `(p, s)` grid over the interior of the support with `s ∈ [0, 3]`.
pub fn decomposition_grid(f: &DensityModel, n: usize) -> Vec<(f64, f64)> {
    let ps = crate::density::interior_grid(f, n);
    let mut g = Vec::with_capacity(ps.len() * n);
    for &p in &ps {
        for j in 0..n {
            g.push((p, 3.0 * j as f64 / (n - 1).max(1) as f64));
        }
    }
    g
}

/// A simplex with `d + 1` vertices in `ℝ^d`, `d ≤ 3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simplex {
    pub d: usize,
    pub vertices: Vec<[f64; 3]>,
    /// Apex height `Z` of the cell.
    pub apex_t: f64,
}

impl Simplex {
    pub fn volume(&self) -> f64 {
        simplex_volume(&self.vertices, self.d)
    }
}

/// Direct sampler of the ν-weighted typical cell for the three decomposable
/// families: the apex height `Z` and the shape `(X_1, …, X_{d+1})` are
/// independent, and the cell is `conv(φ(Z)X_1, …, φ(Z)X_{d+1})`.
#[derive(Clone, Debug)]
pub struct DecomposedSampler {
    d: usize,
    a: f64,
    dec: Decomposition,
    z: ZLaw,
    /// Envelope constant `M` with `Δ^a ≤ M Σ_i ∏_{j≠i} ‖x_j‖^a`.
    envelope: f64,
}

#[derive(Clone, Copy, Debug)]
enum ZLaw {
    /// `Z = origin + (U/C)^{1/m}`, `U ~ Gamma(shape)`.
    Power { shape: f64, c: f64, m: f64, origin: f64 },
    /// `Z = pole − (U/C)^{−1/κ}`.
    Pole { shape: f64, c: f64, kappa: f64, pole: f64 },
    /// `Z = ln(U/C)/λ`.
    Exp { shape: f64, c: f64, lambda: f64 },
}

/// Draws accepted per attempt below which the sampler gives up.
const MIN_ACCEPTANCE: f64 = 1e-4;

impl DecomposedSampler {
    pub fn new(spec: &TypicalCellSpec) -> Result<Self> {
        let d = spec.d;
        if d > 3 {
            return Err(Error::Unsupported("decomposed sampling is implemented for d ≤ 3".into()));
        }
        let dec = Decomposition::of(&spec.f)
            .ok_or_else(|| Error::NotApplicable("the decomposed sampler needs a beta, beta-prime or Gaussian model".into()))?;
        if spec.nu < -1.0 {
            return Err(Error::InvalidOrder(spec.nu));
        }
        let df = d as f64;
        let half = df / 2.0;
        let a = spec.nu + 1.0;
        let i1 = FracFunction::closed_of_model(&spec.f, half + 1.0)
            .ok_or_else(|| Error::Divergent("the paraboloid count is infinite".into()))?;
        let gp = spec.gamma * PI.powf(half);
        let phi_power = df * (df + spec.nu + 2.0);
        let z = match (dec, i1) {
            (Decomposition::Beta { beta, origin }, FracFunction::Power { coef, k, .. }) => {
                let big_a = phi_power / 2.0 + (df + 1.0) * beta;
                ZLaw::Power {
                    shape: (big_a + 1.0) / k,
                    c: gp * coef,
                    m: k,
                    origin,
                }
            }
            (Decomposition::BetaPrime { beta, pole }, FracFunction::PolePower { coef, kappa, .. }) => {
                let big_a = phi_power / 2.0 - (df + 1.0) * beta;
                ZLaw::Pole {
                    shape: -(big_a + 1.0) / kappa,
                    c: gp * coef,
                    kappa,
                    pole,
                }
            }
            (Decomposition::Gaussian { lambda }, FracFunction::Exp { coef, .. }) => ZLaw::Exp {
                shape: df + 1.0,
                c: gp * coef,
                lambda,
            },
            _ => return Err(Error::NotApplicable("inconsistent decomposition".into())),
        };
        let shape = match z {
            ZLaw::Power { shape, .. } | ZLaw::Pole { shape, .. } | ZLaw::Exp { shape, .. } => shape,
        };
        if !(shape > 0.0) {
            return Err(Error::Divergent(format!("the apex-height law is not normalizable (shape {shape})")));
        }
        if let Decomposition::BetaPrime { beta, .. } = dec {
            if !(beta > (a + df) / 2.0) {
                return Err(Error::Divergent(format!(
                    "the shape law needs beta > (nu + 1 + d)/2 = {}",
                    (a + df) / 2.0
                )));
            }
        }
        let envelope = (df + 1.0).powf((a - 1.0).max(0.0)) / factorial(d).powf(a);
        Ok(Self { d, a, dec, z, envelope })
    }

    fn sample_z<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let draw = |shape: f64, rng: &mut R| Gamma::new(shape, 1.0).expect("valid gamma").sample(rng);
        match self.z {
            ZLaw::Power { shape, c, m, origin } => origin + (draw(shape, rng) / c).powf(1.0 / m),
            ZLaw::Pole { shape, c, kappa, pole } => pole - (draw(shape, rng) / c).powf(-1.0 / kappa),
            ZLaw::Exp { shape, c, lambda } => (draw(shape, rng) / c).ln() / lambda,
        }
    }

    /// A point with density proportional to `‖x‖^b ψ(‖x‖²)`.
    fn radial_point<R: rand::Rng + ?Sized>(&self, b: f64, rng: &mut R) -> [f64; 3] {
        let shape = (b + self.d as f64) / 2.0;
        let s: f64 = match self.dec {
            Decomposition::Beta { beta, .. } => Beta::new(shape, beta + 1.0).expect("valid beta").sample(rng),
            Decomposition::BetaPrime { beta, .. } => {
                let y: f64 = Beta::new(shape, beta - shape).expect("valid beta").sample(rng);
                y / (1.0 - y)
            }
            Decomposition::Gaussian { lambda } => Gamma::new(shape, 1.0 / lambda).expect("valid gamma").sample(rng),
        };
        let mut x = [0.0; 3];
        let mut n2: f64 = 0.0;
        while n2 == 0.0 {
            for c in x.iter_mut().take(self.d) {
                *c = rng.sample(StandardNormal);
            }
            n2 = x.iter().map(|c| c * c).sum();
        }
        let r = s.sqrt() / n2.sqrt();
        x.iter_mut().for_each(|c| *c *= r);
        x
    }

    /// Shape block with density proportional to `Δ^a ∏ ψ(‖x_i‖²)`, by
    /// rejection from the mixture over which point drops the `‖x‖^a` factor.
    fn sample_shape<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<[f64; 3]>> {
        let n = self.d + 1;
        if self.a == 0.0 {
            return Ok((0..n).map(|_| self.radial_point(0.0, rng)).collect());
        }
        let mut attempts = 0u64;
        loop {
            attempts += 1;
            let skip = rng.random_range(0..n);
            let pts: Vec<[f64; 3]> = (0..n).map(|i| self.radial_point(if i == skip { 0.0 } else { self.a }, rng)).collect();
            let norms: Vec<f64> = pts.iter().map(|x| x.iter().map(|c| c * c).sum::<f64>().sqrt().powf(self.a)).collect();
            let mix: f64 = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| norms[j]).product::<f64>()).sum();
            let target = simplex_volume(&pts, self.d).powf(self.a);
            if rng.random::<f64>() * self.envelope * mix < target {
                return Ok(pts);
            }
            if attempts > 1000 && (1.0 / attempts as f64) < MIN_ACCEPTANCE {
                return Err(Error::Inconclusive(format!("shape rejection accepted nothing in {attempts} attempts")));
            }
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Simplex> {
        let z = self.sample_z(rng);
        let phi = self.dec.phi(z);
        let vertices = self.sample_shape(rng)?.into_iter().map(|x| x.map(|c| c * phi)).collect();
        Ok(Simplex {
            d: self.d,
            vertices,
            apex_t: z,
        })
    }
}

/// One draw of the typical cell from a seed.
pub fn sample_typical_cell_decomposed(spec: &TypicalCellSpec, seed: u64) -> Result<Simplex> {
    let sampler = DecomposedSampler::new(spec)?;
    sampler.sample(&mut rng::stream(seed, &[tag::SAMPLER]))
}

/// Volumes of `n` decomposed-sampler draws, split into fixed chunks so the
/// result does not depend on the thread count.
pub fn decomposed_volumes(spec: &TypicalCellSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    const CHUNK: usize = 4096;
    let sampler = DecomposedSampler::new(spec)?;
    let chunks: Vec<Result<Vec<f64>>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, &[tag::SAMPLER, c as u64]);
            let m = CHUNK.min(n - c * CHUNK);
            (0..m).map(|_| sampler.sample(&mut rng).map(|s| s.volume())).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Moments `E Vol^s` of decomposed-sampler draws against the closed form.
pub fn decomposed_moment_reports(spec: &TypicalCellSpec, n: usize, seed: u64, orders: &[f64]) -> Result<Vec<MomentReport>> {
    let vols = decomposed_volumes(spec, n, seed)?;
    orders
        .iter()
        .map(|&s| {
            let xs: Vec<f64> = vols.iter().map(|v| v.powf(s)).collect();
            let (m, se) = mean_se(&xs);
            Ok(MomentReport::new(
                format!("E Vol^{s} (nu = {})", spec.nu),
                m,
                se,
                volume_moment(spec, s)?,
                n as u64,
                "decomposed",
            ))
        })
        .collect()
}

/// Harvest settings: the inner window and the apex-height tail mass left out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarvestOptions {
    pub inner_half_side: f64,
    /// Palm tail mass beyond the weight cap.
    pub tail_mass: f64,
    pub bias_budget: f64,
    /// Largest moment order `s` the harvest must support.
    pub max_order: f64,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        Self {
            inner_half_side: 2.0,
            tail_mass: 1e-5,
            bias_budget: 1e-4,
            max_order: 1.0,
        }
    }
}

/// Simulation window for harvesting typical cells: the weight cap is the
/// larger apex-height quantile of the two weighted cell laws in the ratio.
pub fn harvest_window(spec: &TypicalCellSpec, opts: &HarvestOptions) -> Result<SimulationWindow> {
    harvest_window_in(spec, Aabb::centered(spec.d, opts.inner_half_side)?, opts)
}

/// As [`harvest_window`] with an explicit inner box; `inner_half_side` is
/// ignored.
pub fn harvest_window_in(spec: &TypicalCellSpec, inner: Aabb, opts: &HarvestOptions) -> Result<SimulationWindow> {
    if inner.d != spec.d {
        return Err(Error::InvalidWindow(format!("window of dimension {} for a model in dimension {}", inner.d, spec.d)));
    }
    let q = 1.0 - opts.tail_mass;
    let cap = apex_height_quantile(spec, spec.nu + 1.0, q)?.max(apex_height_quantile(spec, spec.nu + opts.max_order + 1.0, q)?);
    let floor = weight_floor(&spec.f, spec.gamma, &inner, cap, opts.bias_budget)?;
    SimulationWindow::layered(inner, cap, floor)
}

/// Cell statistics of one simulated tessellation on `window`. A realization
/// without included simplices contributes an empty table.
pub fn harvest_replicate(spec: &TypicalCellSpec, window: &SimulationWindow, seed: u64) -> Result<CellStats> {
    let sample = sample_ppp(&spec.f, spec.gamma, window, seed)?;
    let dual = build_regular_triangulation(&sample.points, spec.d)?;
    match cell_statistics(&dual, window, spec.nu) {
        Err(Error::EmptyInclusion(_)) => Ok(CellStats {
            nu: spec.nu,
            rows: Vec::new(),
        }),
        other => other,
    }
}

/// Replicate-level sums `(Σ Vol^{ν+s}, Σ Vol^ν)` over included simplices.
pub fn replicate_sums(stats: &CellStats, nu: f64, s: f64) -> (f64, f64) {
    let num = stats.included().map(|r| r.volume.powf(nu + s)).sum();
    let den = stats.included().map(|r| r.volume.powf(nu)).sum();
    (num, den)
}

/// Ratio estimate of `E Vol(Z_ν)^s` over replicates with a replicate-level
/// jackknife error, against `volume_moment`.
pub fn empirical_typical_cell_moments(stats: &[CellStats], spec: &TypicalCellSpec, s: f64) -> Result<MomentReport> {
    if stats.is_empty() {
        return Err(Error::EmptyInclusion("no replicates".into()));
    }
    let cells: usize = stats.iter().map(|st| st.included().count()).sum();
    if cells == 0 {
        return Err(Error::EmptyInclusion(format!("no simplex included in {} replicates", stats.len())));
    }
    let (num, den): (Vec<f64>, Vec<f64>) = stats.iter().map(|st| replicate_sums(st, spec.nu, s)).unzip();
    let (est, se) = if s == 0.0 { (1.0, 0.0) } else { jackknife_ratio(&num, &den) };
    let target = volume_moment(spec, s)?;
    Ok(MomentReport::new(
        format!("E Vol^{s} (nu = {})", spec.nu),
        est,
        se,
        target,
        cells as u64,
        "harvest",
    ))
}

/// Included simplices per unit inner volume, averaged over replicates.
pub fn apex_intensity(stats: &[CellStats], window: &SimulationWindow) -> (f64, f64) {
    let xs: Vec<f64> = stats.iter().map(|s| s.included().count() as f64 / window.inner.volume()).collect();
    mean_se(&xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn beta1() -> DensityModel {
        DensityModel::beta(2, 1.0).unwrap()
    }

    #[test]
    fn j_matches_direct_one_dimensional_integral() {
        let step = DensityModel::power_law(0.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(j_eval(&step, 1, 0.0, 1.0).unwrap(), 2.0, max_relative = 1e-14);
        assert_eq!(j_eval(&step, 2, 1.0, -1.0).unwrap(), 0.0);
        // ∫ |x| f(1 − x²) dx = 1 for the step function.
        assert_relative_eq!(j_eval(&step, 1, 1.0, 1.0).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn k_alpha_zero_beta_model() {
        let k = k_eval(&beta1(), 2, 0.0, 1.0).unwrap();
        let c = 15.0 / (8.0 * PI) / 2.0;
        assert_eq!(k.kind, KKind::Exact);
        assert_relative_eq!(k.value, PI.powi(3) * c.powi(3), max_relative = 1e-13);
    }

    #[test]
    fn uniform_disk_simplex_moment() {
        let disk = DensityModel::power_law(0.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(simplex_moment(&disk, 2, 2.0, 1.0).unwrap(), 3.0 / 32.0, max_relative = 1e-13);
        assert_relative_eq!(parallelotope_moment(&disk, 2, 0.0, 1.0).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn beta_remark_formula_agrees_with_k_path() {
        for (alpha, beta, p) in [(0.5, 0.0, 1.0), (1.0, 1.0, 2.0), (2.0, 2.5, 0.7), (3.0, -0.5, 1.3)] {
            let f = DensityModel::power_law(beta, 1.0, 0.0).unwrap();
            let k = simplex_moment(&f, 2, alpha, p).unwrap();
            assert_relative_eq!(k, beta_simplex_moment(2, alpha, beta, p), max_relative = 1e-11);
        }
    }

    #[test]
    fn k_respects_its_upper_bound() {
        let models = [beta1(), DensityModel::beta_prime(2, 4.0).unwrap(), DensityModel::gaussian(1.0).unwrap()];
        for f in &models {
            for alpha in [0.0, 0.5, 1.0, 2.0, 3.0] {
                for p in crate::density::interior_grid(f, 7) {
                    let k = k_eval(f, 2, alpha, p).unwrap();
                    let b = k_bound(f, 2, alpha, p).unwrap();
                    assert!(k.value <= b * (1.0 + 1e-12), "{alpha} {p} {} {b}", k.value);
                }
            }
        }
    }

    #[test]
    fn k_monte_carlo_matches_closed_form() {
        let f = DensityModel::gaussian(1.0).unwrap();
        let (mc, se) = k_monte_carlo(&f, 2, 1.0, 0.3, 200_000, 3).unwrap();
        let exact = k_eval(&f, 2, 1.0, 0.3).unwrap().value;
        assert!((mc - exact).abs() < 4.0 * se, "{mc} ± {se} vs {exact}");
    }

    #[test]
    fn normalization_table() {
        let spec = TypicalCellSpec::new(beta1(), 1.0, 0.0, 2).unwrap();
        assert_relative_eq!(normalization_alpha(&spec).unwrap(), 1.858_99, max_relative = 2e-5);
        assert_relative_eq!(normalization_alpha(&spec.with_nu(1.0)).unwrap(), 1.0, max_relative = 1e-9);
        let g = TypicalCellSpec::new(DensityModel::gaussian(1.0).unwrap(), 1.0, 0.0, 2).unwrap();
        assert_relative_eq!(volume_moment(&g, 1.0).unwrap(), 3f64.sqrt() / 2.0, max_relative = 1e-9);
        assert_relative_eq!(volume_moment(&g, 2.0).unwrap(), 1.125, max_relative = 1e-9);
        let bp = TypicalCellSpec::new(DensityModel::beta_prime(2, 2.5).unwrap(), 1.0, 0.0, 2).unwrap();
        assert_relative_eq!(volume_moment(&bp, 1.0).unwrap(), PI / 15.0, max_relative = 1e-8);
        assert_eq!(normalization_alpha(&bp.with_nu(2.0)).unwrap(), f64::INFINITY);
        assert!(volume_moment(&bp, 2.0).is_err());
        assert_eq!(volume_moment(&bp, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn moment_ratios_telescope() {
        let spec = TypicalCellSpec::new(beta1(), 1.0, 0.0, 2).unwrap();
        let (s1, s2) = (0.5, 1.0);
        let lhs = volume_moment(&spec, s1 + s2).unwrap();
        let rhs = volume_moment(&spec, s1).unwrap() * volume_moment(&spec.with_nu(s1), s2).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
    }

    #[test]
    fn nu_one_identity_holds() {
        for f in [beta1(), DensityModel::beta_prime(2, 2.5).unwrap(), DensityModel::gaussian(1.0).unwrap()] {
            let (v, t) = nu_one_identity(&f, 1.0, 2).unwrap();
            assert_relative_eq!(v, t, max_relative = 1e-8);
        }
    }

    #[test]
    fn finiteness_cases() {
        let bp = DensityModel::beta_prime(2, 2.5).unwrap();
        assert_eq!(finiteness_check(&bp, 0.0, 2).case, FinitenessCase::IV);
        assert_eq!(finiteness_check(&bp, 2.0, 2).case, FinitenessCase::Unknown);
        assert_eq!(finiteness_check(&bp, 1.0, 2).case, FinitenessCase::I);
        assert_eq!(finiteness_check(&beta1(), 5.0, 2).case, FinitenessCase::III);
        let g = finiteness_check(&DensityModel::gaussian(1.0).unwrap(), 0.0, 2);
        assert!(g.direct_verification && g.finite());
    }

    #[test]
    fn decomposition_residuals() {
        for f in [beta1(), DensityModel::beta_prime(2, 2.5).unwrap(), DensityModel::gaussian(1.0).unwrap()] {
            let dec = Decomposition::of(&f).unwrap();
            let grid = decomposition_grid(&f, 25);
            assert!(decomposition_check(&f, |p| dec.phi(p), |x| dec.psi(x), &grid) <= 1e-12);
        }
        let f = beta1();
        let grid = decomposition_grid(&f, 25);
        let wrong = |x: f64| (1.0 - x).max(0.0).powf(2.0);
        assert!(decomposition_check(&f, |p: f64| p.sqrt(), wrong, &grid) >= 0.1);
    }

    #[test]
    fn decomposed_sampler_moments() {
        let g = TypicalCellSpec::new(DensityModel::gaussian(0.5).unwrap(), 1.0, 1.0, 2).unwrap();
        for r in decomposed_moment_reports(&g, 100_000, 7, &[1.0, 2.0]).unwrap() {
            assert!(r.passes(4.0), "{r:?}");
        }
        let minus = TypicalCellSpec::new(beta1(), 1.0, -1.0, 2).unwrap();
        let s = sample_typical_cell_decomposed(&minus, 1).unwrap();
        assert_eq!(s.vertices.len(), 3);
        assert!(DecomposedSampler::new(&TypicalCellSpec::new(DensityModel::beta_prime(2, 2.5).unwrap(), 1.0, 2.0, 2).unwrap()).is_err());
    }

    #[test]
    fn shape_sampler_reproduces_uniform_disk_triangles() {
        // ν = 1 with β = 0: shape density ∝ Δ² on the unit disk, so
        // E Δ^s = E_uniform Δ^{2+s} / E_uniform Δ².
        let spec = TypicalCellSpec::new(DensityModel::power_law(0.0, 1.0, 0.0).unwrap(), 1.0, 1.0, 2).unwrap();
        let sampler = DecomposedSampler::new(&spec).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| simplex_volume(&sampler.sample_shape(&mut rng).unwrap(), 2)).collect();
        let (m, se) = mean_se(&xs);
        let disk = DensityModel::power_law(0.0, 1.0, 0.0).unwrap();
        let target = simplex_moment(&disk, 2, 3.0, 1.0).unwrap() / simplex_moment(&disk, 2, 2.0, 1.0).unwrap();
        assert!((m - target).abs() < 4.0 * se, "{m} ± {se} vs {target}");
    }

    #[test]
    fn harvest_ratio_is_one_at_order_zero() {
        let spec = TypicalCellSpec::new(beta1(), 1.0, 0.0, 2).unwrap();
        let opts = HarvestOptions {
            inner_half_side: 1.5,
            ..HarvestOptions::default()
        };
        let window = harvest_window(&spec, &opts).unwrap();
        let stats: Vec<CellStats> = (0..4).map(|r| harvest_replicate(&spec, &window, r).unwrap()).collect();
        let r = empirical_typical_cell_moments(&stats, &spec, 0.0).unwrap();
        assert_eq!(r.estimate, 1.0);
        let (intensity, _) = apex_intensity(&stats, &window);
        assert!(intensity > 1.0 && intensity < 3.0, "{intensity}");
    }
}
