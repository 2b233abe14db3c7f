//! Tanh-sinh quadrature on the unit interval with endpoint-accurate abscissae.
//!
//! The integrand receives both `u` and `1 - u`, each computed without
//! cancellation, so callers can place an integrable endpoint singularity at
//! either end and evaluate it relative to the endpoint exactly.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Largest abscissa parameter; beyond it the node distances underflow.
const Z_MAX: f64 = 6.2;
const MIN_LEVEL: usize = 3;
const MAX_LEVEL: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    /// Relative tolerance on the integral.
    pub tol: f64,
    /// Absolute tolerance floor, used when the integral is near zero.
    pub abs_tol: f64,
    /// Maximum number of bisections after the level refinement stalls.
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            abs_tol: 1e-300,
            max_subdivisions: 64,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Integrates `g(u, 1-u)` over `u` in `[0, 1]`.
pub fn unit<G>(g: G, opts: &QuadOptions) -> Result<QuadResult>
where
    G: Fn(f64, f64) -> f64,
{
    let mut budget = opts.max_subdivisions;
    let mut evaluations = 0;
    let (value, error) = segment(&g, 0.0, 0.0, 1.0, 0.0, opts, &mut budget, &mut evaluations, 0)?;
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

// Integrates over the subinterval [lo, 1 - hi_c] of the unit interval, where
// `hi_c` is the complement of the right end so both ends are exact. After a
// bisection the children also accept an absolute error share of the parent's
// estimate, so a kink does not force endless refinement.
#[allow(clippy::too_many_arguments)]
fn segment<G>(
    g: &G,
    lo: f64,
    hi_c: f64,
    width: f64,
    abs_target: f64,
    opts: &QuadOptions,
    budget: &mut usize,
    evaluations: &mut usize,
    depth: usize,
) -> Result<(f64, f64)>
where
    G: Fn(f64, f64) -> f64,
{
    let eval = |dl: f64, dr: f64, evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let (u, uc) = (lo + dl, hi_c + dr);
        let v = g(u, uc);
        if v.is_nan() {
            return Err(Error::NonFinite(format!("integrand is NaN at u = {u:e}")));
        }
        if v.is_infinite() {
            return Err(Error::NonFinite(format!("integrand is infinite at u = {u:e}")));
        }
        Ok(v)
    };

    let mut h = 1.0;
    // Level 0: the midpoint plus the pairs at integer multiples of h.
    let mut sum = width * FRAC_PI_2 * 0.5 * eval(0.5 * width, 0.5 * width, evaluations)?;
    sum += pairs(&eval, width, h, 1, 1, evaluations)?;
    let mut prev = sum * h;
    let mut err = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        sum += pairs(&eval, width, h, 1, 2, evaluations)?;
        let est = sum * h;
        err = (est - prev).abs();
        prev = est;
        if level >= MIN_LEVEL && err <= (opts.tol * est.abs()).max(abs_target).max(opts.abs_tol) {
            return Ok((est, err));
        }
    }

    if *budget == 0 || depth > 40 {
        return Err(Error::NonConvergence {
            estimate: prev,
            error: err,
        });
    }
    *budget -= 1;
    let half = 0.5 * width;
    let target = 0.5 * abs_target.max(opts.tol * prev.abs());
    let left = segment(g, lo, hi_c + half, half, target, opts, budget, evaluations, depth + 1)?;
    let right = segment(g, lo + half, hi_c, half, target, opts, budget, evaluations, depth + 1)?;
    Ok((left.0 + right.0, left.1 + right.1))
}

// Sums weight * value over node pairs z = k*h for k = start, start+step, ...
fn pairs<E>(eval: &E, width: f64, h: f64, start: usize, step: usize, evals: &mut usize) -> Result<f64>
where
    E: Fn(f64, f64, &mut usize) -> Result<f64>,
{
    let mut acc = 0.0;
    let mut k = start;
    loop {
        let z = k as f64 * h;
        if z > Z_MAX {
            break;
        }
        let q = FRAC_PI_2 * z.sinh();
        let e = (-2.0 * q).exp();
        let small = e / (1.0 + e);
        let big = 1.0 / (1.0 + e);
        let dl = width * small;
        if dl == 0.0 || !dl.is_finite() {
            break;
        }
        let w = std::f64::consts::PI * z.cosh() * small * big * width;
        let left = eval(dl, width * big, evals)?;
        let right = eval(width * big, dl, evals)?;
        acc += w * (left + right);
        k += step;
    }
    Ok(acc)
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn finite<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let len = b - a;
    unit(
        |u, uc| {
            let x = if u <= uc { a + len * u } else { b - len * uc };
            f(x) * len
        },
        opts,
    )
}

/// Integrates `f` over `[a, ∞)` with the map `x = a + scale·u/(1-u)`.
pub fn to_infinity<F>(f: F, a: f64, scale: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    unit(
        |u, uc| {
            let x = a + scale * u / uc;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v * scale / (uc * uc)
            }
        },
        opts,
    )
}

/// Integrates `f` over `(-∞, b]` with the map `x = b - scale·u/(1-u)`.
pub fn from_neg_infinity<F>(f: F, b: f64, scale: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    to_infinity(|y| f(2.0 * b - y), b, scale, opts)
}

/// Integrates `f` over an arbitrary interval, splitting at `center` when both
/// ends are infinite. `scale` sets the width of the mapped tails.
pub fn interval<F>(f: F, a: f64, b: f64, center: f64, scale: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    match (a.is_finite(), b.is_finite()) {
        (true, true) => finite(f, a, b, opts),
        (true, false) => to_infinity(f, a, scale, opts),
        (false, true) => from_neg_infinity(f, b, scale, opts),
        (false, false) => {
            let l = from_neg_infinity(&f, center, scale, opts)?;
            let r = to_infinity(&f, center, scale, opts)?;
            Ok(combine(l, r))
        }
    }
}

pub fn combine(a: QuadResult, b: QuadResult) -> QuadResult {
    QuadResult {
        value: a.value + b.value,
        error: a.error + b.error,
        evaluations: a.evaluations + b.evaluations,
    }
}
