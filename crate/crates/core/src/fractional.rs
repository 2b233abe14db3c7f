//! Liouville fractional integrals `I^α f(p) = Γ(α)^{-1} ∫_{-∞}^p f(t)(p-t)^{α-1} dt`
//! and Riemann-Liouville derivatives `D^α = (d/dx)^n I^{n-α}`, `n = ⌈α⌉`.
//!
//! Closed forms cover the power-law, pole-power and exponential families.
//! Everything else goes through piecewise tanh-sinh quadrature with the
//! kernel singularity, support endpoints and tails in separate pieces.

use std::fmt;
use std::sync::Arc;

use crate::density::{DensityModel, Family};
use crate::error::{Error, Result};
use crate::math::{gamma, gamma_ratio, gamma_ratio_signed, ln_gamma};
use crate::quad::{self, QuadOptions};

/// Width of the piece next to the kernel singularity.
const NEAR_WIDTH: f64 = 1.0;
/// Successive growing tail panels that signal divergence.
const GROWTH_PANELS: usize = 20;
const GROWTH_FACTOR: f64 = 1.05;
/// Truncation depth for custom densities without a tail hint.
const BLIND_TAIL: f64 = 1_048_576.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Method {
    /// Closed form when the model carries one, quadrature otherwise.
    #[default]
    Auto,
    ClosedForm,
    Quadrature,
}

#[derive(Clone, Debug)]
pub struct FracEvaluator {
    model: DensityModel,
    opts: QuadOptions,
    method: Method,
}

impl FracEvaluator {
    pub fn new(model: DensityModel) -> Self {
        Self {
            model,
            opts: QuadOptions::default(),
            method: Method::Auto,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.opts.tol = tol;
        self
    }

    pub fn with_max_subdivisions(mut self, n: usize) -> Self {
        self.opts.max_subdivisions = n;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn model(&self) -> &DensityModel {
        &self.model
    }

    pub fn tol(&self) -> f64 {
        self.opts.tol
    }

    /// `I^α f(p)`, in `[0, ∞]`.
    pub fn integral(&self, alpha: f64, p: f64) -> Result<f64> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidOrder(alpha));
        }
        if alpha == 0.0 {
            return Ok(self.model.eval(p));
        }
        match self.method {
            Method::ClosedForm => closed_integral(&self.model, alpha, p)
                .ok_or_else(|| Error::NotApplicable("model has no closed-form fractional integral here".into())),
            Method::Auto => match closed_integral(&self.model, alpha, p) {
                Some(v) => Ok(v),
                None => self.quadrature(alpha, p),
            },
            Method::Quadrature => self.quadrature(alpha, p),
        }
    }

    /// `I^α f` as a function handle, closed when possible.
    pub fn integral_function(&self, alpha: f64) -> FracFunction {
        if self.method != Method::Quadrature {
            if let Some(f) = FracFunction::closed_of_model(&self.model, alpha) {
                return f;
            }
        }
        FracFunction::Integral {
            model: self.model.clone(),
            order: alpha,
            tol: self.opts.tol,
        }
    }

    fn quadrature(&self, alpha: f64, p: f64) -> Result<f64> {
        if let Family::NegPowerLaw { beta, pole, .. } = self.model.family() {
            if p >= *pole && *beta >= 1.0 {
                return Ok(f64::INFINITY);
            }
        }
        let raw = kernel_integral(&self.model, alpha, p, &self.opts)?;
        if raw.is_infinite() {
            return Ok(f64::INFINITY);
        }
        if raw <= 0.0 {
            return Ok(0.0);
        }
        Ok((raw.ln() - ln_gamma(alpha)).exp())
    }
}

/// Closed-form `I^α f(p)` for the three families, `None` when not available.
pub fn closed_integral(f: &DensityModel, alpha: f64, p: f64) -> Option<f64> {
    match *f.family() {
        Family::PowerLaw { beta, scale, origin } => {
            if p <= origin {
                Some(0.0)
            } else {
                Some(scale * gamma_ratio(beta + 1.0, alpha + beta + 1.0) * (p - origin).powf(alpha + beta))
            }
        }
        Family::NegPowerLaw { beta, scale, pole } => {
            if p >= pole {
                if beta >= 1.0 {
                    Some(f64::INFINITY)
                } else {
                    None
                }
            } else if beta > alpha {
                Some(scale * gamma_ratio(beta - alpha, beta) * (pole - p).powf(alpha - beta))
            } else {
                Some(f64::INFINITY)
            }
        }
        Family::Exponential { lambda, scale } => Some(scale * lambda.powf(-alpha) * (lambda * p).exp()),
        Family::Custom(_) => None,
    }
}

/// `I^α f(p)` with the default evaluator.
pub fn frac_integral(f: &DensityModel, alpha: f64, p: f64) -> Result<f64> {
    FracEvaluator::new(f.clone()).integral(alpha, p)
}

/// Both sides of the shift identity `I^α f(p) = I^α (f∘τ_c)(p - c)`,
/// `τ_c(x) = x + c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftedValue {
    pub direct: f64,
    pub shifted: f64,
}

impl ShiftedValue {
    /// The canonical value, taken from the unshifted evaluation.
    pub fn value(&self) -> f64 {
        self.direct
    }
}

pub fn frac_integral_shifted(f: &DensityModel, alpha: f64, p: f64, c: f64) -> Result<ShiftedValue> {
    let direct = frac_integral(f, alpha, p)?;
    let shifted = frac_integral(&f.translated(c)?, alpha, p - c)?;
    Ok(ShiftedValue { direct, shifted })
}

/// Evaluates `I^α f(x)` for `f` on `(-∞, b)` through the half-line form
/// `(b-x)^{α-1} (I^α_{0+} g)(1/(b-x))`, `g(u) = u^{-α-1} f(b - 1/u)`, and
/// checks it against the direct evaluation.
pub fn beta_prime_substitution(f: &DensityModel, alpha: f64, x: f64, tol: f64) -> Result<f64> {
    let b = f.interval().upper();
    if !b.is_finite() {
        return Err(Error::NotApplicable("substitution needs a finite right endpoint".into()));
    }
    if !(x < b) {
        return Err(Error::NotApplicable(format!("x = {x} must lie below the endpoint {b}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidOrder(alpha));
    }
    let y = 1.0 / (b - x);
    let opts = QuadOptions::with_tol(1e-12);
    // g(u) (y-u)^{α-1} on (0, y), singular at both ends.
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let v = f.eval_below_upper(1.0 / u);
        if v == 0.0 {
            0.0
        } else {
            (v.ln() - (alpha + 1.0) * u.ln()).exp()
        }
    };
    let half = 0.5 * y;
    let left = quad::finite(|u| g(u) * (y - u).powf(alpha - 1.0), 0.0, half, &opts)
        .map_err(|e| Error::Divergent(format!("substituted integral near 0: {e}")))?;
    let right = quad::unit(
        |s, sc| {
            let u = half + half * s;
            let dist = half * sc;
            g(u) * dist.powf(alpha - 1.0) * half
        },
        &opts,
    )
    .map_err(|e| Error::Divergent(format!("substituted integral near 1/(b-x): {e}")))?;
    let value = (b - x).powf(alpha - 1.0) * (left.value + right.value) / gamma(alpha);
    let direct = frac_integral(f, alpha, x)?;
    if crate::math::rel_diff(value, direct) > tol {
        return Err(Error::Inconclusive(format!(
            "substitution {value:e} disagrees with direct evaluation {direct:e}"
        )));
    }
    Ok(value)
}

// ∫_{-∞}^{p} f(t) (p-t)^{α-1} dt without the 1/Γ(α) factor.
fn kernel_integral(f: &DensityModel, alpha: f64, p: f64, opts: &QuadOptions) -> Result<f64> {
    let (lo, hi) = f.support();
    if p <= lo {
        return Ok(0.0);
    }
    let blind = !f.has_tail_hint();
    if p < hi {
        let dist_lower = p - lo;
        let near = NEAR_WIDTH.min(hi - p);
        if dist_lower <= 2.0 * near {
            let w = 0.5 * dist_lower;
            let a = near_piece(f, alpha, p, w, opts)?;
            let b = lower_piece(f, alpha, dist_lower, w, opts)?;
            return Ok(a + b);
        }
        let a = near_piece(f, alpha, p, near, opts)?;
        let b = if lo.is_finite() {
            lower_piece(f, alpha, dist_lower, dist_lower - near, opts)?
        } else {
            tail_piece(f, alpha, p, near, blind, opts)?
        };
        Ok(a + b)
    } else {
        // The support ends at hi <= p: f may blow up at hi.
        let gap = p - hi;
        let width = if lo.is_finite() { NEAR_WIDTH.min(0.5 * (hi - lo)) } else { NEAR_WIDTH };
        let a = upper_piece(f, alpha, gap, width, opts)?;
        if a.is_infinite() {
            return Ok(a);
        }
        let dist_lower = p - lo;
        let b = if lo.is_finite() {
            lower_piece(f, alpha, dist_lower, hi - lo - width, opts)?
        } else {
            tail_piece(f, alpha, p, gap + width, blind, opts)?
        };
        Ok(a + b)
    }
}

// ∫_0^w f(p-u) u^{α-1} du.
fn near_piece(f: &DensityModel, alpha: f64, p: f64, w: f64, opts: &QuadOptions) -> Result<f64> {
    if alpha < 1.0 {
        // u = s^{1/α} removes the kernel singularity.
        let top = w.powf(alpha);
        let r = quad::unit(|s, _| f.eval(p - (top * s).powf(1.0 / alpha)) * top, opts)?;
        Ok(r.value / alpha)
    } else {
        let r = quad::unit(
            |s, _| {
                let u = w * s;
                f.eval(p - u) * u.powf(alpha - 1.0) * w
            },
            opts,
        )?;
        Ok(r.value)
    }
}

// ∫_0^w f(lo + s) (dist_lower - s)^{α-1} ds, with lo the support start.
fn lower_piece(f: &DensityModel, alpha: f64, dist_lower: f64, w: f64, opts: &QuadOptions) -> Result<f64> {
    if w <= 0.0 {
        return Ok(0.0);
    }
    let r = quad::unit(
        |s, _| {
            let x = w * s;
            let v = f.eval_above_lower(x);
            if v == 0.0 {
                0.0
            } else {
                v * (dist_lower - x).powf(alpha - 1.0) * w
            }
        },
        opts,
    )?;
    Ok(r.value)
}

// ∫_0^w f(hi - v) (gap + v)^{α-1} dv next to the upper support end.
fn upper_piece(f: &DensityModel, alpha: f64, gap: f64, w: f64, opts: &QuadOptions) -> Result<f64> {
    let integrand = |v: f64| {
        let fv = f.eval_below_upper(v);
        if fv == 0.0 {
            0.0
        } else {
            fv * (gap + v).powf(alpha - 1.0)
        }
    };
    match quad::unit(|s, _| integrand(w * s) * w, opts) {
        Ok(r) => Ok(r.value),
        Err(Error::NonConvergence { .. }) | Err(Error::NonFinite(_)) => scan_inward(&integrand, w, opts),
        Err(e) => Err(e),
    }
}

// ∫_{-∞}^{p-near} f(t)(p-t)^{α-1} dt.
fn tail_piece(f: &DensityModel, alpha: f64, p: f64, near: f64, blind: bool, opts: &QuadOptions) -> Result<f64> {
    let integrand = |r: f64| {
        let v = f.eval(p - r);
        if v == 0.0 {
            0.0
        } else {
            v * r.powf(alpha - 1.0)
        }
    };
    if blind {
        let total = quad::finite(integrand, near, BLIND_TAIL, opts)?.value;
        let last = quad::finite(integrand, 0.5 * BLIND_TAIL, BLIND_TAIL, opts)?.value;
        if last > opts.tol * total.max(opts.abs_tol) {
            return Err(Error::Inconclusive(format!(
                "tail truncated at p - 2^20 still contributes {last:e} (no tail hint on the density)"
            )));
        }
        return Ok(total);
    }
    // r = 1/s maps the tail to (0, 1/near].
    let top = 1.0 / near;
    let mapped = quad::unit(
        |s, _| {
            let x = top * s;
            let v = f.eval(p - 1.0 / x);
            if v == 0.0 {
                0.0
            } else {
                (v.ln() - (alpha + 1.0) * x.ln()).exp() * top
            }
        },
        opts,
    );
    match mapped {
        Ok(r) => Ok(r.value),
        Err(Error::NonConvergence { .. }) | Err(Error::NonFinite(_)) => scan_outward(&integrand, near, opts),
        Err(e) => Err(e),
    }
}

// Dyadic panels [w 2^k, w 2^{k+1}] toward infinity.
fn scan_outward<F: Fn(f64) -> f64>(g: &F, w: f64, opts: &QuadOptions) -> Result<f64> {
    let mut acc = 0.0;
    let mut prev = f64::NAN;
    let mut growing = 0;
    let mut a = w;
    for _ in 0..2000 {
        let b = 2.0 * a;
        if !b.is_finite() {
            break;
        }
        let v = quad::finite(g, a, b, opts)?.value;
        acc += v;
        if v >= GROWTH_FACTOR * prev {
            growing += 1;
            if growing >= GROWTH_PANELS {
                return Ok(f64::INFINITY);
            }
        } else {
            growing = 0;
            if v <= 0.1 * opts.tol * acc.abs() {
                return Ok(acc);
            }
        }
        prev = v;
        a = b;
    }
    Err(Error::NonConvergence {
        estimate: acc,
        error: prev,
    })
}

// Dyadic panels [w 2^{-k-1}, w 2^{-k}] toward zero.
fn scan_inward<F: Fn(f64) -> f64>(g: &F, w: f64, opts: &QuadOptions) -> Result<f64> {
    let mut acc = 0.0;
    let mut prev = f64::NAN;
    let mut growing = 0;
    let mut b = w;
    for _ in 0..1000 {
        let a = 0.5 * b;
        if a <= f64::MIN_POSITIVE {
            break;
        }
        let v = quad::finite(g, a, b, opts)?.value;
        acc += v;
        if v >= GROWTH_FACTOR * prev {
            growing += 1;
            if growing >= GROWTH_PANELS {
                return Ok(f64::INFINITY);
            }
        } else {
            growing = 0;
            if v <= 0.1 * opts.tol * acc.abs() {
                return Ok(acc);
            }
        }
        prev = v;
        b = a;
    }
    Err(Error::NonConvergence {
        estimate: acc,
        error: prev,
    })
}

/// A function handle for fractional derivatives.
#[derive(Clone)]
pub enum FracFunction {
    /// `coef · (x - origin)^k` for `x > origin`, zero otherwise; `k > -1`.
    Power { coef: f64, k: f64, origin: f64 },
    /// `coef · (pole - x)^{-kappa}` for `x < pole`.
    PolePower { coef: f64, kappa: f64, pole: f64 },
    /// `coef · exp(m x)`.
    Exp { coef: f64, m: f64 },
    /// `I^order f` evaluated by quadrature.
    Integral { model: DensityModel, order: f64, tol: f64 },
    /// `base^n`, evaluable only.
    Pow { base: Box<FracFunction>, n: i32 },
    /// An arbitrary evaluable function, differentiated only at integer orders.
    Numeric(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for FracFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FracFunction::Power { coef, k, origin } => write!(f, "Power({coef}·(x-{origin})^{k})"),
            FracFunction::PolePower { coef, kappa, pole } => write!(f, "PolePower({coef}·({pole}-x)^-{kappa})"),
            FracFunction::Exp { coef, m } => write!(f, "Exp({coef}·e^({m}x))"),
            FracFunction::Integral { order, .. } => write!(f, "Integral(order {order})"),
            FracFunction::Pow { base, n } => write!(f, "({base:?})^{n}"),
            FracFunction::Numeric(_) => write!(f, "Numeric"),
        }
    }
}

impl FracFunction {
    /// Closed-form `I^α f` for the three families.
    pub fn closed_of_model(f: &DensityModel, alpha: f64) -> Option<Self> {
        match *f.family() {
            Family::PowerLaw { beta, scale, origin } => Some(FracFunction::Power {
                coef: scale * gamma_ratio(beta + 1.0, alpha + beta + 1.0),
                k: alpha + beta,
                origin,
            }),
            Family::NegPowerLaw { beta, scale, pole } if beta > alpha => Some(FracFunction::PolePower {
                coef: scale * gamma_ratio(beta - alpha, beta),
                kappa: beta - alpha,
                pole,
            }),
            Family::Exponential { lambda, scale } => Some(FracFunction::Exp {
                coef: scale * lambda.powf(-alpha),
                m: lambda,
            }),
            _ => None,
        }
    }

    pub fn numeric<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        FracFunction::Numeric(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FracFunction::Power { coef, k, origin } => {
                let s = x - origin;
                if s > 0.0 {
                    coef * s.powf(*k)
                } else {
                    0.0
                }
            }
            FracFunction::PolePower { coef, kappa, pole } => {
                let v = pole - x;
                if v > 0.0 {
                    coef * v.powf(-kappa)
                } else {
                    f64::INFINITY
                }
            }
            FracFunction::Exp { coef, m } => coef * (m * x).exp(),
            FracFunction::Integral { model, order, tol } => FracEvaluator::new(model.clone())
                .with_tol(*tol)
                .with_method(Method::Quadrature)
                .integral(*order, x)
                .unwrap_or(f64::NAN),
            FracFunction::Pow { base, n } => base.eval(x).powi(*n),
            FracFunction::Numeric(f) => f(x),
        }
    }

    /// `self^n` for closed kinds, a `Pow` wrapper otherwise.
    pub fn powi(&self, n: i32) -> Self {
        let nf = n as f64;
        match *self {
            FracFunction::Power { coef, k, origin } => FracFunction::Power {
                coef: coef.powi(n),
                k: k * nf,
                origin,
            },
            FracFunction::PolePower { coef, kappa, pole } => FracFunction::PolePower {
                coef: coef.powi(n),
                kappa: kappa * nf,
                pole,
            },
            FracFunction::Exp { coef, m } => FracFunction::Exp {
                coef: coef.powi(n),
                m: m * nf,
            },
            _ => FracFunction::Pow {
                base: Box::new(self.clone()),
                n,
            },
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(
            self,
            FracFunction::Power { .. } | FracFunction::PolePower { .. } | FracFunction::Exp { .. }
        )
    }

    /// `I^s self` when it can be represented.
    pub fn integral(&self, s: f64) -> Option<Self> {
        match *self {
            FracFunction::Power { coef, k, origin } => Some(FracFunction::Power {
                coef: coef * gamma_ratio(k + 1.0, k + s + 1.0),
                k: k + s,
                origin,
            }),
            FracFunction::PolePower { coef, kappa, pole } if kappa > s => Some(FracFunction::PolePower {
                coef: coef * gamma_ratio(kappa - s, kappa),
                kappa: kappa - s,
                pole,
            }),
            FracFunction::Exp { coef, m } if m > 0.0 => Some(FracFunction::Exp {
                coef: coef * m.powf(-s),
                m,
            }),
            FracFunction::Integral { ref model, order, tol } => Some(FracFunction::Integral {
                model: model.clone(),
                order: order + s,
                tol,
            }),
            _ => None,
        }
    }

    /// Closed-form `D^μ self`.
    pub fn closed_derivative(&self, mu: f64) -> Option<Self> {
        match *self {
            FracFunction::Power { coef, k, origin } => Some(FracFunction::Power {
                coef: coef * gamma_ratio_signed(k + 1.0, k + 1.0 - mu),
                k: k - mu,
                origin,
            }),
            FracFunction::PolePower { coef, kappa, pole } if kappa > 0.0 => Some(FracFunction::PolePower {
                coef: coef * gamma_ratio(kappa + mu, kappa),
                kappa: kappa + mu,
                pole,
            }),
            FracFunction::Exp { coef, m } if m > 0.0 => Some(FracFunction::Exp {
                coef: coef * m.powf(mu),
                m,
            }),
            _ => None,
        }
    }
}

/// Default finite-difference step `1e-4 · max(1, |p|)`.
pub fn default_step(p: f64) -> f64 {
    1e-4 * p.abs().max(1.0)
}

/// `D^α F(p)`; `step = None` uses [`default_step`].
pub fn frac_derivative(func: &FracFunction, alpha: f64, p: f64, step: Option<f64>) -> Result<f64> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidOrder(alpha));
    }
    if alpha == 0.0 {
        return finite(func.eval(p), p);
    }
    if let Some(d) = func.closed_derivative(alpha) {
        return finite(d.eval(p), p);
    }
    let n = alpha.ceil() as usize;
    let h0 = step.unwrap_or_else(|| default_step(p));
    if alpha == alpha.floor() {
        if n > 4 {
            return Err(Error::UnsupportedOrder(alpha));
        }
        return richardson(&|x| func.eval(x), n, p, h0 * 4f64.powi(n as i32 - 1));
    }
    if n >= 2 {
        return Err(Error::UnsupportedOrder(alpha));
    }
    let g = func.integral(1.0 - alpha).ok_or(Error::UnsupportedOrder(alpha))?;
    let g = match g {
        FracFunction::Integral { model, order, .. } => FracFunction::Integral { model, order, tol: 1e-13 },
        other => other,
    };
    richardson(&|x| g.eval(x), 1, p, h0)
}

fn finite(v: f64, p: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("function value {v} at p = {p}")))
    }
}

fn stencil(g: &dyn Fn(f64) -> f64, n: usize, p: f64, h: f64) -> Result<f64> {
    let at = |x: f64| finite(g(x), x);
    let v = match n {
        1 => (at(p + h)? - at(p - h)?) / (2.0 * h),
        2 => (at(p + h)? - 2.0 * at(p)? + at(p - h)?) / (h * h),
        3 => (at(p + 2.0 * h)? - 2.0 * at(p + h)? + 2.0 * at(p - h)? - at(p - 2.0 * h)?) / (2.0 * h.powi(3)),
        4 => {
            (at(p + 2.0 * h)? - 4.0 * at(p + h)? + 6.0 * at(p)? - 4.0 * at(p - h)? + at(p - 2.0 * h)?) / h.powi(4)
        }
        _ => unreachable!("stencil order checked by caller"),
    };
    Ok(v)
}

fn richardson(g: &dyn Fn(f64) -> f64, n: usize, p: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || p + 0.5 * h == p || p - 0.5 * h == p {
        return Err(Error::StepUnderflow(p));
    }
    let coarse = stencil(g, n, p, h)?;
    let fine = stencil(g, n, p, 0.5 * h)?;
    finite((4.0 * fine - coarse) / 3.0, p)
}
