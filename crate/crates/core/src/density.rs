//! Weight densities `f` on the interval types `[a, ∞)`, `(-∞, b)` and `ℝ`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fractional::{FracEvaluator, Method};
use crate::math::{gamma_ratio, ln_gamma};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntervalSpec {
    /// `E = [a, ∞)`.
    RightHalfLine { a: f64 },
    /// `E = (-∞, b)`, with `f` possibly non-integrable at `b`.
    LeftOpenHalfLine { b: f64 },
    FullLine,
}

impl IntervalSpec {
    pub fn lower(&self) -> f64 {
        match *self {
            IntervalSpec::RightHalfLine { a } => a,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            IntervalSpec::LeftOpenHalfLine { b } => b,
            _ => f64::INFINITY,
        }
    }

    pub fn contains_interior(&self, h: f64) -> bool {
        h > self.lower() && h < self.upper()
    }
}

/// Power-law index of a custom density at a support boundary, used to
/// classify finiteness of normalization constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularVariation {
    pub index: f64,
}

type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A density given by an evaluable function plus the metadata that numerics
/// cannot recover from point evaluations.
#[derive(Clone)]
pub struct CustomDensity {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    func: Func,
    /// `f` vanishes outside `[support.0, support.1]`.
    pub support: (f64, f64),
    /// Declared decay toward `-∞`; without it the tail is truncated.
    pub tail_decay: bool,
    /// Declared membership in `L¹`.
    pub integrable: bool,
    /// Regular variation at `+∞` (right half-line) or at the pole.
    pub regular_variation: Option<RegularVariation>,
}

impl CustomDensity {
    pub fn new<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
            func: Arc::new(func),
            support: (f64::NEG_INFINITY, f64::INFINITY),
            tail_decay: false,
            integrable: false,
            regular_variation: None,
        }
    }

    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.support = (lo, hi);
        self
    }

    pub fn with_tail_decay(mut self) -> Self {
        self.tail_decay = true;
        self
    }

    pub fn with_integrable(mut self) -> Self {
        self.integrable = true;
        self
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_regular_variation(mut self, index: f64) -> Self {
        self.regular_variation = Some(RegularVariation { index });
        self
    }

    pub fn eval(&self, h: f64) -> f64 {
        (self.func)(h)
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum Family {
    /// `scale · (h - origin)^beta` on `(origin, ∞)`.
    PowerLaw { beta: f64, scale: f64, origin: f64 },
    /// `scale · (pole - h)^(-beta)` on `(-∞, pole)`.
    NegPowerLaw { beta: f64, scale: f64, pole: f64 },
    /// `scale · exp(lambda · h)` on `ℝ`.
    Exponential { lambda: f64, scale: f64 },
    Custom(CustomDensity),
}

#[derive(Clone, Debug)]
pub struct DensityModel {
    interval: IntervalSpec,
    family: Family,
    truncated: bool,
}

/// `c_{n,β} = Γ(n/2+β+1) / (π^{n/2} Γ(β+1))`.
pub fn beta_normalization(n: usize, beta: f64) -> f64 {
    let h = n as f64 / 2.0;
    (ln_gamma(h + beta + 1.0) - h * PI.ln() - ln_gamma(beta + 1.0)).exp()
}

/// `c'_{n,β} = Γ(β) / (π^{n/2} Γ(β - n/2))`.
pub fn beta_prime_normalization(n: usize, beta: f64) -> f64 {
    let h = n as f64 / 2.0;
    (ln_gamma(beta) - h * PI.ln() - ln_gamma(beta - h)).exp()
}

impl DensityModel {
    pub fn power_law(beta: f64, scale: f64, origin: f64) -> Result<Self> {
        if !(beta > -1.0) || !(scale > 0.0) || !origin.is_finite() || !beta.is_finite() || !scale.is_finite() {
            return Err(Error::InvalidModel(format!(
                "power law needs beta > -1, scale > 0 (beta = {beta}, scale = {scale}, origin = {origin})"
            )));
        }
        Ok(Self {
            interval: IntervalSpec::RightHalfLine { a: origin },
            family: Family::PowerLaw { beta, scale, origin },
            truncated: false,
        })
    }

    pub fn neg_power_law(beta: f64, scale: f64, pole: f64) -> Result<Self> {
        if !beta.is_finite() || !(scale > 0.0) || !pole.is_finite() || !scale.is_finite() {
            return Err(Error::InvalidModel(format!(
                "negative power law needs finite beta, scale > 0 (beta = {beta}, scale = {scale})"
            )));
        }
        Ok(Self {
            interval: IntervalSpec::LeftOpenHalfLine { b: pole },
            family: Family::NegPowerLaw { beta, scale, pole },
            truncated: false,
        })
    }

    pub fn exponential(lambda: f64, scale: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(scale > 0.0) || !lambda.is_finite() || !scale.is_finite() {
            return Err(Error::InvalidModel(format!(
                "exponential needs lambda > 0, scale > 0 (lambda = {lambda}, scale = {scale})"
            )));
        }
        Ok(Self {
            interval: IntervalSpec::FullLine,
            family: Family::Exponential { lambda, scale },
            truncated: false,
        })
    }

    pub fn custom(interval: IntervalSpec, density: CustomDensity) -> Result<Self> {
        let (lo, hi) = density.support;
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidModel(format!("custom support [{lo}, {hi}] is empty")));
        }
        let mut density = density;
        density.support = (lo.max(interval.lower()), hi.min(interval.upper()));
        Ok(Self {
            interval,
            family: Family::Custom(density),
            truncated: false,
        })
    }

    /// β-model in dimension `d`: `c_{d+1,β} h^β` on `(0, ∞)`.
    pub fn beta(d: usize, beta: f64) -> Result<Self> {
        Self::power_law(beta, beta_normalization(d + 1, beta), 0.0)
    }

    /// β′-model in dimension `d`: `c'_{d+1,β} (-h)^{-β}` on `(-∞, 0)`.
    pub fn beta_prime(d: usize, beta: f64) -> Result<Self> {
        let h = (d + 1) as f64 / 2.0;
        if !(beta > h) {
            return Err(Error::InvalidModel(format!(
                "beta-prime normalization needs beta > (d+1)/2 = {h}, got {beta}"
            )));
        }
        Self::neg_power_law(beta, beta_prime_normalization(d + 1, beta), 0.0)
    }

    /// Gaussian model `exp(λh)` on `ℝ`.
    pub fn gaussian(lambda: f64) -> Result<Self> {
        Self::exponential(lambda, 1.0)
    }

    pub fn interval(&self) -> IntervalSpec {
        self.interval
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self.family, Family::Custom(_))
    }

    /// Bounds outside of which `f` vanishes.
    pub fn support(&self) -> (f64, f64) {
        match &self.family {
            Family::PowerLaw { origin, .. } => (*origin, f64::INFINITY),
            Family::NegPowerLaw { pole, .. } => (f64::NEG_INFINITY, *pole),
            Family::Exponential { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Custom(c) => c.support,
        }
    }

    /// Whether numerics may treat the left tail as decaying.
    pub fn has_tail_hint(&self) -> bool {
        match &self.family {
            Family::Custom(c) => c.tail_decay || c.support.0.is_finite(),
            _ => true,
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        if !self.interval.contains_interior(h) && !(h == self.interval.lower()) {
            return 0.0;
        }
        match &self.family {
            Family::PowerLaw { beta, scale, origin } => {
                let s = h - origin;
                if s > 0.0 {
                    scale * s.powf(*beta)
                } else {
                    0.0
                }
            }
            Family::NegPowerLaw { beta, scale, pole } => {
                let v = pole - h;
                if v > 0.0 {
                    scale * v.powf(-beta)
                } else {
                    0.0
                }
            }
            Family::Exponential { lambda, scale } => scale * (lambda * h).exp(),
            Family::Custom(c) => {
                if h < c.support.0 || h > c.support.1 {
                    0.0
                } else {
                    c.eval(h).max(0.0)
                }
            }
        }
    }

    /// `f(lower + s)` evaluated without forming `lower + s` when possible.
    pub fn eval_above_lower(&self, s: f64) -> f64 {
        match &self.family {
            Family::PowerLaw { beta, scale, .. } if s > 0.0 => scale * s.powf(*beta),
            _ => self.eval(self.support().0 + s),
        }
    }

    /// `f(upper - v)` evaluated without forming `upper - v` when possible.
    pub fn eval_below_upper(&self, v: f64) -> f64 {
        match &self.family {
            Family::NegPowerLaw { beta, scale, .. } if v > 0.0 => scale * v.powf(-beta),
            _ => self.eval(self.support().1 - v),
        }
    }

    /// Tags a model on `(-∞, b)` so that samplers may ignore weights `≥ b`.
    pub fn truncate_generalized(&self) -> Result<Self> {
        match self.interval {
            IntervalSpec::LeftOpenHalfLine { .. } => Ok(Self {
                truncated: true,
                ..self.clone()
            }),
            other => Err(Error::NotApplicable(format!(
                "truncation applies to (-inf, b) intervals only, got {other:?}"
            ))),
        }
    }

    /// Translates the argument: returns `g` with `g(t) = f(t + c)`.
    pub fn translated(&self, c: f64) -> Result<Self> {
        self.compose_affine(1.0, c)
    }

    /// Returns `f ∘ φ` with `φ(x) = λx + c`.
    pub fn compose_affine(&self, lambda: f64, c: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidModel(format!("affine factor must be positive, got {lambda}")));
        }
        let mut out = match &self.family {
            Family::PowerLaw { beta, scale, origin } => {
                Self::power_law(*beta, scale * lambda.powf(*beta), (origin - c) / lambda)?
            }
            Family::NegPowerLaw { beta, scale, pole } => {
                Self::neg_power_law(*beta, scale * lambda.powf(-beta), (pole - c) / lambda)?
            }
            Family::Exponential { lambda: l, scale } => Self::exponential(l * lambda, scale * (l * c).exp())?,
            Family::Custom(cd) => {
                let inner = cd.clone();
                let map = move |x: f64| (x - c) / lambda;
                let interval = match self.interval {
                    IntervalSpec::RightHalfLine { a } => IntervalSpec::RightHalfLine { a: map(a) },
                    IntervalSpec::LeftOpenHalfLine { b } => IntervalSpec::LeftOpenHalfLine { b: map(b) },
                    IntervalSpec::FullLine => IntervalSpec::FullLine,
                };
                let mut params = cd.params.clone();
                params.insert("affine_lambda".into(), lambda);
                params.insert("affine_c".into(), c);
                let mut nd = CustomDensity::new(format!("{}∘affine", cd.name), move |x| inner.eval(lambda * x + c))
                    .with_support(map(cd.support.0), map(cd.support.1))
                    .with_params(params);
                nd.tail_decay = cd.tail_decay;
                nd.integrable = cd.integrable;
                nd.regular_variation = cd.regular_variation;
                Self::custom(interval, nd)?
            }
        };
        out.truncated = self.truncated;
        Ok(out)
    }

    /// Returns `(f∘φ, γ̃)` with `φ(x) = λx + c` and `γ̃ = λ^{d/2+1} γ`.
    pub fn shift_scale(&self, lambda: f64, c: f64, gamma: f64, d: usize) -> Result<(Self, f64)> {
        let g = self.compose_affine(lambda, c)?;
        Ok((g, lambda.powf(d as f64 / 2.0 + 1.0) * gamma))
    }

    /// Density `f_ℓ = π^{(d-ℓ)/2} I^{(d-ℓ)/2} f` governing `ℓ`-dimensional sections.
    pub fn sectional_density(&self, d: usize, l: usize) -> Result<Self> {
        if l == 0 || l >= d {
            return Err(Error::InvalidModel(format!("section dimension must satisfy 1 <= l < d, got l={l}, d={d}")));
        }
        let report = check_admissible(self, d)?;
        if !report.pass() {
            return Err(Error::InvalidModel(format!("density is not admissible in dimension {d}")));
        }
        let k = (d - l) as f64 / 2.0;
        let pk = PI.powf(k);
        let mut out = match &self.family {
            Family::PowerLaw { beta, scale, origin } => {
                Self::power_law(beta + k, scale * pk * gamma_ratio(beta + 1.0, beta + k + 1.0), *origin)?
            }
            Family::NegPowerLaw { beta, scale, pole } => {
                Self::neg_power_law(beta - k, scale * pk * gamma_ratio(beta - k, *beta), *pole)?
            }
            Family::Exponential { lambda, scale } => Self::exponential(*lambda, scale * (PI / lambda).powf(k))?,
            Family::Custom(cd) => {
                let ev = FracEvaluator::new(self.clone()).with_method(Method::Quadrature);
                let mut params = cd.params.clone();
                params.insert("section_order".into(), k);
                let mut nd = CustomDensity::new(format!("{}|section", cd.name), move |p| {
                    ev.integral(k, p).map(|v| pk * v).unwrap_or(f64::NAN)
                })
                .with_support(cd.support.0, self.interval.upper())
                .with_params(params);
                nd.tail_decay = cd.tail_decay;
                Self::custom(self.interval, nd)?
            }
        };
        out.truncated = self.truncated;
        Ok(out)
    }

    pub fn to_spec(&self) -> ModelSpec {
        match &self.family {
            Family::PowerLaw { beta, scale, origin } => ModelSpec::Power {
                beta: *beta,
                scale: Some(*scale),
                interval: IntervalSpec::RightHalfLine { a: *origin },
            },
            Family::NegPowerLaw { beta, scale, pole } => ModelSpec::Negpower {
                beta: *beta,
                scale: Some(*scale),
                interval: IntervalSpec::LeftOpenHalfLine { b: *pole },
            },
            Family::Exponential { lambda, scale } => ModelSpec::Exponential {
                lambda: *lambda,
                scale: Some(*scale),
                interval: IntervalSpec::FullLine,
            },
            Family::Custom(cd) => ModelSpec::Custom {
                name: cd.name.clone(),
                params: cd.params.clone(),
                interval: self.interval,
            },
        }
    }

    /// Hex digest of the canonical JSON of the model specification.
    pub fn model_hash(&self) -> String {
        let json = serde_json::to_string(&self.to_spec()).expect("model spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// JSON model description. `scale` defaults to the normalization of the
/// β/β′ families in the dimension supplied to [`ModelSpec::build`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelSpec {
    Power {
        beta: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        interval: IntervalSpec,
    },
    Negpower {
        beta: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        interval: IntervalSpec,
    },
    Exponential {
        lambda: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        interval: IntervalSpec,
    },
    Custom {
        name: String,
        params: BTreeMap<String, f64>,
        interval: IntervalSpec,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamSpec {
    #[allow(dead_code)]
    family: String,
    #[serde(default)]
    beta: Option<f64>,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    scale: Option<f64>,
    interval: IntervalSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomSpec {
    #[allow(dead_code)]
    family: String,
    name: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    interval: IntervalSpec,
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        use serde::de::Error as _;
        let value = Value::deserialize(deserializer)?;
        let family = value
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| D::Error::missing_field("family"))?
            .to_owned();
        let need = |v: Option<f64>, name: &'static str| v.ok_or_else(|| D::Error::missing_field(name));
        let forbid = |v: Option<f64>, name: &str| {
            if v.is_some() {
                Err(D::Error::custom(format!("field `{name}` is not valid for family `{family}`")))
            } else {
                Ok(())
            }
        };
        match family.as_str() {
            "power" | "negpower" | "exponential" => {
                let p: ParamSpec = serde_json::from_value(value).map_err(D::Error::custom)?;
                match family.as_str() {
                    "power" => {
                        forbid(p.lambda, "lambda")?;
                        Ok(ModelSpec::Power {
                            beta: need(p.beta, "beta")?,
                            scale: p.scale,
                            interval: p.interval,
                        })
                    }
                    "negpower" => {
                        forbid(p.lambda, "lambda")?;
                        Ok(ModelSpec::Negpower {
                            beta: need(p.beta, "beta")?,
                            scale: p.scale,
                            interval: p.interval,
                        })
                    }
                    _ => {
                        forbid(p.beta, "beta")?;
                        Ok(ModelSpec::Exponential {
                            lambda: need(p.lambda, "lambda")?,
                            scale: p.scale,
                            interval: p.interval,
                        })
                    }
                }
            }
            "custom" => {
                let c: CustomSpec = serde_json::from_value(value).map_err(D::Error::custom)?;
                Ok(ModelSpec::Custom {
                    name: c.name,
                    params: c.params,
                    interval: c.interval,
                })
            }
            other => Err(D::Error::unknown_variant(other, &["power", "negpower", "exponential", "custom"])),
        }
    }
}

impl ModelSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model spec serializes")
    }

    /// Builds the model; `d` fixes the default normalization of β/β′ models.
    pub fn build(&self, d: usize) -> Result<DensityModel> {
        match self {
            ModelSpec::Power { beta, scale, interval } => {
                let IntervalSpec::RightHalfLine { a } = *interval else {
                    return Err(Error::InvalidModel("power family needs a right_half_line interval".into()));
                };
                let scale = scale.unwrap_or_else(|| beta_normalization(d + 1, *beta));
                DensityModel::power_law(*beta, scale, a)
            }
            ModelSpec::Negpower { beta, scale, interval } => {
                let IntervalSpec::LeftOpenHalfLine { b } = *interval else {
                    return Err(Error::InvalidModel("negpower family needs a left_open_half_line interval".into()));
                };
                let scale = match scale {
                    Some(s) => *s,
                    None => {
                        if !(*beta > (d + 1) as f64 / 2.0) {
                            return Err(Error::InvalidModel(format!(
                                "default normalization needs beta > (d+1)/2, got {beta}"
                            )));
                        }
                        beta_prime_normalization(d + 1, *beta)
                    }
                };
                DensityModel::neg_power_law(*beta, scale, b)
            }
            ModelSpec::Exponential { lambda, scale, interval } => {
                if *interval != IntervalSpec::FullLine {
                    return Err(Error::InvalidModel("exponential family needs a full_line interval".into()));
                }
                DensityModel::exponential(*lambda, scale.unwrap_or(1.0))
            }
            ModelSpec::Custom { name, params, interval } => registry(name, params, *interval),
        }
    }
}

fn param(params: &BTreeMap<String, f64>, name: &str, key: &str) -> Result<f64> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| Error::InvalidModel(format!("custom density `{name}` needs parameter `{key}`")))
}

fn check_keys(params: &BTreeMap<String, f64>, name: &str, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) && !k.starts_with("mix_") {
            return Err(Error::InvalidModel(format!("custom density `{name}` has unknown parameter `{k}`")));
        }
    }
    Ok(())
}

/// Named custom densities that can be described in JSON.
///
/// - `box {lo, hi}`: indicator of `(lo, hi)`.
/// - `half_normal_mark {sigma}`: half-normal density on `(-∞, 0]`, an
///   independent marking of a homogeneous process.
/// - `power_mixture {origin, mix_w<k>, mix_beta<k>}`: `Σ w_k (h-origin)^{β_k}`.
pub fn registry(name: &str, params: &BTreeMap<String, f64>, interval: IntervalSpec) -> Result<DensityModel> {
    let built = match name {
        "box" => {
            check_keys(params, name, &["lo", "hi"])?;
            let lo = param(params, name, "lo")?;
            let hi = param(params, name, "hi")?;
            if !(lo < hi) {
                return Err(Error::InvalidModel(format!("box needs lo < hi, got [{lo}, {hi}]")));
            }
            CustomDensity::new("box", move |h| if h > lo && h < hi { 1.0 } else { 0.0 })
                .with_support(lo, hi)
                .with_integrable()
        }
        "half_normal_mark" => {
            check_keys(params, name, &["sigma"])?;
            let sigma = param(params, name, "sigma")?;
            if !(sigma > 0.0) {
                return Err(Error::InvalidModel(format!("half_normal_mark needs sigma > 0, got {sigma}")));
            }
            let c = (2.0 / PI).sqrt() / sigma;
            CustomDensity::new("half_normal_mark", move |h| {
                if h <= 0.0 {
                    c * (-0.5 * (h / sigma).powi(2)).exp()
                } else {
                    0.0
                }
            })
            .with_support(f64::NEG_INFINITY, 0.0)
            .with_tail_decay()
            .with_integrable()
        }
        "power_mixture" => {
            let origin = param(params, name, "origin")?;
            let mut terms = Vec::new();
            for k in 0.. {
                let (wk, bk) = (format!("mix_w{k}"), format!("mix_beta{k}"));
                match (params.get(&wk), params.get(&bk)) {
                    (Some(w), Some(b)) => {
                        if !(*w > 0.0) || !(*b > -1.0) {
                            return Err(Error::InvalidModel(format!(
                                "power_mixture term {k} needs w > 0 and beta > -1"
                            )));
                        }
                        terms.push((*w, *b));
                    }
                    (None, None) => break,
                    _ => return Err(Error::InvalidModel(format!("power_mixture term {k} is incomplete"))),
                }
            }
            check_keys(params, name, &["origin"])?;
            if terms.is_empty() {
                return Err(Error::InvalidModel("power_mixture needs at least one term".into()));
            }
            let index = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
            CustomDensity::new("power_mixture", move |h| {
                let s = h - origin;
                if s <= 0.0 {
                    0.0
                } else {
                    terms.iter().map(|(w, b)| w * s.powf(*b)).sum()
                }
            })
            .with_support(origin, f64::INFINITY)
            .with_regular_variation(index)
        }
        other => return Err(Error::InvalidModel(format!("unknown custom density `{other}`"))),
    };
    DensityModel::custom(interval, built.with_params(params.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct F2Report {
    pub ok: bool,
    /// Least-squares slope of `log I^{d/2+1}f(b - 1/n)` against `log n`.
    pub epsilon: f64,
    pub values: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// `(t, I^{d/2+1} f(t) < ∞)` on the test grid.
    pub f1: Vec<(f64, bool)>,
    pub f2: Option<F2Report>,
    /// Decided by the exact predicate of a closed-form family.
    pub exact: bool,
    pub inconclusive: bool,
    pub notes: Vec<String>,
}

impl AdmissibilityReport {
    pub fn f1_ok(&self) -> bool {
        !self.f1.is_empty() && self.f1.iter().all(|p| p.1)
    }

    pub fn pass(&self) -> bool {
        !self.inconclusive && self.f1_ok() && self.f2.as_ref().is_none_or(|r| r.ok)
    }
}

/// Interior test points of `E`, log-spaced away from the finite endpoint.
pub fn interior_grid(f: &DensityModel, n: usize) -> Vec<f64> {
    let (lo, hi) = (f.interval().lower(), f.interval().upper());
    let logs = (0..n).map(|i| -4.0 + 8.0 * i as f64 / (n - 1).max(1) as f64);
    match (lo.is_finite(), hi.is_finite()) {
        (true, _) => logs.map(|e| lo + 10f64.powf(e)).collect(),
        (false, true) => logs.map(|e| hi - 10f64.powf(e)).collect(),
        (false, false) => (0..n).map(|i| -20.0 + 40.0 * i as f64 / (n - 1).max(1) as f64).collect(),
    }
}

/// Checks (F1): finiteness of `I^{d/2+1}f` on `E`, and for `E = (-∞, b)`
/// (F2): polynomial divergence at `b`.
pub fn check_admissible(f: &DensityModel, d: usize) -> Result<AdmissibilityReport> {
    if d == 0 {
        return Err(Error::InvalidModel("dimension must be at least 1".into()));
    }
    let order = d as f64 / 2.0 + 1.0;
    let grid = interior_grid(f, 17);
    match f.family() {
        Family::PowerLaw { beta, .. } => {
            let ok = *beta > -1.0;
            Ok(AdmissibilityReport {
                f1: grid.into_iter().map(|t| (t, ok)).collect(),
                f2: None,
                exact: true,
                inconclusive: false,
                notes: vec![format!("power law: exact predicate beta > -1 ({beta})")],
            })
        }
        Family::NegPowerLaw { beta, .. } => {
            let f1 = *beta > order;
            let epsilon = beta - order;
            Ok(AdmissibilityReport {
                f1: grid.into_iter().map(|t| (t, f1)).collect(),
                f2: Some(F2Report {
                    ok: f1 && epsilon > 0.0,
                    epsilon,
                    values: Vec::new(),
                }),
                exact: true,
                inconclusive: false,
                notes: vec![format!("negative power law: exact predicate beta > d/2 + 1 = {order} ({beta})")],
            })
        }
        Family::Exponential { .. } => Ok(AdmissibilityReport {
            f1: grid.into_iter().map(|t| (t, true)).collect(),
            f2: None,
            exact: true,
            inconclusive: false,
            notes: vec!["exponential: always admissible".into()],
        }),
        Family::Custom(_) => check_admissible_numeric(f, d),
    }
}

/// Numerical admissibility check, also usable on closed-form families.
pub fn check_admissible_numeric(f: &DensityModel, d: usize) -> Result<AdmissibilityReport> {
    let order = d as f64 / 2.0 + 1.0;
    let ev = FracEvaluator::new(f.clone()).with_method(Method::Quadrature);
    let mut notes = Vec::new();
    let mut inconclusive = false;
    let mut f1 = Vec::new();
    for t in interior_grid(f, 17) {
        match ev.integral(order, t) {
            Ok(v) => f1.push((t, v.is_finite())),
            Err(e) => {
                inconclusive = true;
                notes.push(format!("F1 at t = {t}: {e}"));
                f1.push((t, false));
            }
        }
    }
    let f2 = if let IntervalSpec::LeftOpenHalfLine { b } = f.interval() {
        let mut values = Vec::new();
        for k in 1..=16 {
            let n = 2f64.powi(k);
            match ev.integral(order, b - 1.0 / n) {
                Ok(v) => values.push((n, v)),
                Err(e) => {
                    inconclusive = true;
                    notes.push(format!("F2 at n = {n}: {e}"));
                }
            }
        }
        let pts: Vec<(f64, f64)> = values
            .iter()
            .filter(|(_, v)| v.is_finite() && *v > 0.0)
            .map(|(n, v)| (n.ln(), v.ln()))
            .collect();
        let epsilon = slope(&pts);
        let diverges = values.len() >= 2 && values.last().map(|l| l.1) > values.first().map(|f| f.1);
        Some(F2Report {
            ok: epsilon >= 0.05 && diverges && pts.len() == values.len(),
            epsilon,
            values,
        })
    } else {
        None
    };
    Ok(AdmissibilityReport {
        f1,
        f2,
        exact: false,
        inconclusive,
        notes,
    })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn beta_model_constant() {
        // c_{3,1} = Γ(7/2)/(π^{3/2} Γ(2)) = 15/(8π)
        assert_relative_eq!(beta_normalization(3, 1.0), 15.0 / (8.0 * PI), max_relative = 1e-13);
    }

    #[test]
    fn beta_prime_constant() {
        // c'_{3,3} = Γ(3)/(π^{3/2} Γ(3/2)) = 4/π²
        assert_relative_eq!(beta_prime_normalization(3, 3.0), 4.0 / (PI * PI), max_relative = 1e-13);
    }

    #[test]
    fn large_beta_normalization_is_finite() {
        assert!(beta_normalization(4, 50.0).is_finite());
        assert!(beta_prime_normalization(4, 50.0).is_finite());
    }

    #[test]
    fn evaluation_respects_interval() {
        let f = DensityModel::power_law(1.0, 2.0, 1.0).unwrap();
        assert_eq!(f.eval(0.5), 0.0);
        assert_relative_eq!(f.eval(3.0), 4.0);
        let g = DensityModel::neg_power_law(2.0, 1.0, 0.0).unwrap();
        assert_eq!(g.eval(0.5), 0.0);
        assert_relative_eq!(g.eval(-2.0), 0.25);
    }

    #[test]
    fn admissibility_examples() {
        assert!(check_admissible(&DensityModel::beta(2, 5.0).unwrap(), 2).unwrap().pass());
        let r = check_admissible(&DensityModel::beta_prime(2, 2.5).unwrap(), 2).unwrap();
        assert!(r.pass());
        assert_relative_eq!(r.f2.unwrap().epsilon, 0.5);
        let r = check_admissible(&DensityModel::neg_power_law(1.5, 1.0, 0.0).unwrap(), 2).unwrap();
        assert!(!r.pass());
    }

    #[test]
    fn numeric_admissibility_agrees_on_families() {
        let r = check_admissible_numeric(&DensityModel::beta_prime(2, 2.5).unwrap(), 2).unwrap();
        assert!(r.pass(), "{r:?}");
        assert_relative_eq!(r.f2.unwrap().epsilon, 0.5, max_relative = 1e-6);
        let r = check_admissible_numeric(&DensityModel::gaussian(1.0).unwrap(), 2).unwrap();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn q_marking_is_admissible() {
        let mut p = BTreeMap::new();
        p.insert("sigma".into(), 1.0);
        let q = registry("half_normal_mark", &p, IntervalSpec::FullLine).unwrap();
        let r = check_admissible(&q, 2).unwrap();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn sectional_families() {
        let s = DensityModel::beta(2, 1.0).unwrap().sectional_density(2, 1).unwrap();
        match s.family() {
            Family::PowerLaw { beta, scale, .. } => {
                assert_relative_eq!(*beta, 1.5);
                assert_relative_eq!(*scale, beta_normalization(2, 1.5), max_relative = 1e-13);
            }
            _ => panic!("expected power law"),
        }
        let s = DensityModel::beta_prime(2, 2.5).unwrap().sectional_density(2, 1).unwrap();
        match s.family() {
            Family::NegPowerLaw { beta, scale, .. } => {
                assert_relative_eq!(*beta, 2.0);
                assert_relative_eq!(*scale, beta_prime_normalization(2, 2.0), max_relative = 1e-13);
            }
            _ => panic!("expected negative power law"),
        }
    }

    #[test]
    fn voronoi_section_limit_exponent() {
        // A homogeneous process in d = 3 has sections with β = (d-ℓ)/2 - 1.
        let f = DensityModel::power_law(0.0, 1.0, 0.0).unwrap();
        match f.sectional_density(3, 2).unwrap().family() {
            Family::PowerLaw { beta, .. } => assert_relative_eq!(*beta, 0.5),
            _ => panic!(),
        }
    }

    #[test]
    fn shift_scale_examples() {
        let f = DensityModel::power_law(1.0, 1.0, 2.0).unwrap();
        let (g, gt) = f.shift_scale(1.0, 2.0, 1.0, 2).unwrap();
        assert_eq!(g.interval(), IntervalSpec::RightHalfLine { a: 0.0 });
        assert_relative_eq!(gt, 1.0);
        let (_, gt) = DensityModel::power_law(0.0, 1.0, 0.0).unwrap().shift_scale(4.0, 0.0, 1.0, 2).unwrap();
        assert_relative_eq!(gt, 16.0);
        let (g, gt) = DensityModel::gaussian(1.0).unwrap().shift_scale(2.0, 0.0, 1.0, 2).unwrap();
        assert!(matches!(g.family(), Family::Exponential { lambda, .. } if *lambda == 2.0));
        assert_relative_eq!(gt, 4.0);
    }

    #[test]
    fn truncation_flag() {
        let f = DensityModel::neg_power_law(3.0, 1.0, 0.0).unwrap().truncate_generalized().unwrap();
        assert!(f.is_truncated());
        assert!(DensityModel::beta(2, 1.0).unwrap().truncate_generalized().is_err());
        let c = DensityModel::custom(
            IntervalSpec::LeftOpenHalfLine { b: 0.0 },
            CustomDensity::new("pole", |h: f64| (-h).powf(-1.2)).with_support(f64::NEG_INFINITY, 0.0),
        )
        .unwrap();
        assert!(c.truncate_generalized().unwrap().is_truncated());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let f = DensityModel::power_law(0.1 + 0.2, 1.0 / 3.0, -7.0e-17).unwrap();
        let json = f.to_spec().to_json();
        let back = ModelSpec::from_json(&json).unwrap().build(2).unwrap();
        assert_eq!(back.to_spec(), f.to_spec());
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let bad = r#"{"family":"power","beta":1,"interval":{"kind":"right_half_line","a":0},"extra":1}"#;
        assert!(ModelSpec::from_json(bad).is_err());
        let bad = r#"{"family":"exponential","lambda":1,"beta":2,"interval":{"kind":"full_line"}}"#;
        assert!(ModelSpec::from_json(bad).is_err());
        let bad = r#"{"family":"power","beta":1,"interval":{"kind":"full_line"}}"#;
        assert!(ModelSpec::from_json(bad).unwrap().build(2).is_err());
    }

    #[test]
    fn json_default_scale_uses_dimension() {
        let s = r#"{"family":"power","beta":1,"interval":{"kind":"right_half_line","a":0}}"#;
        let f = ModelSpec::from_json(s).unwrap().build(2).unwrap();
        assert_relative_eq!(f.eval(1.0), 15.0 / (8.0 * PI), max_relative = 1e-13);
    }

    #[test]
    fn model_hash_is_stable_and_distinguishes() {
        let a = DensityModel::beta(2, 1.0).unwrap();
        let b = DensityModel::beta(2, 1.5).unwrap();
        assert_eq!(a.model_hash(), DensityModel::beta(2, 1.0).unwrap().model_hash());
        assert_ne!(a.model_hash(), b.model_hash());
    }
}
