//! Estimators, standard errors and two-sample tests.

use serde::{Deserialize, Serialize};

/// One verification claim: an estimate with its standard error against a
/// closed-form target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub z_score: f64,
    pub n_samples: u64,
    pub method: String,
}

impl MomentReport {
    pub fn new(label: impl Into<String>, estimate: f64, std_error: f64, target: f64, n_samples: u64, method: impl Into<String>) -> Self {
        let z_score = if estimate == target {
            0.0
        } else if std_error > 0.0 {
            (estimate - target) / std_error
        } else {
            f64::INFINITY.copysign(estimate - target)
        };
        Self {
            label: label.into(),
            estimate,
            std_error,
            target,
            z_score,
            n_samples,
            method: method.into(),
        }
    }

    pub fn passes(&self, z_max: f64) -> bool {
        self.z_score.abs() <= z_max
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::NAN);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Ratio `Σ num / Σ den` with a delete-one jackknife standard error over
/// replicates.
pub fn jackknife_ratio(num: &[f64], den: &[f64]) -> (f64, f64) {
    assert_eq!(num.len(), den.len());
    let (sn, sd): (f64, f64) = (num.iter().sum(), den.iter().sum());
    let est = sn / sd;
    let r = num.len();
    if r < 2 {
        return (est, f64::NAN);
    }
    let loo: Vec<f64> = num.iter().zip(den).map(|(n, d)| (sn - n) / (sd - d)).collect();
    let mean = loo.iter().sum::<f64>() / r as f64;
    let var = loo.iter().map(|t| (t - mean).powi(2)).sum::<f64>() * (r as f64 - 1.0) / r as f64;
    (est, var.sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Variance-to-mean ratio of counts.
pub fn dispersion(counts: &[f64]) -> f64 {
    variance(counts) / (counts.iter().sum::<f64>() / counts.len() as f64)
}

/// Sample covariance and its standard error under independence.
pub fn covariance_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let (c, se) = mean_se(&prods);
    (c * n / (n - 1.0), se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn z_score_sign() {
        let r = MomentReport::new("x", 1.1, 0.05, 1.0, 10, "mc");
        assert_relative_eq!(r.z_score, 2.0, max_relative = 1e-12);
        assert!(r.passes(3.0));
        let exact = MomentReport::new("s0", 1.0, 0.0, 1.0, 10, "ratio");
        assert_eq!(exact.z_score, 0.0);
    }

    #[test]
    fn jackknife_of_constant_ratio() {
        let (e, se) = jackknife_ratio(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]);
        assert_relative_eq!(e, 2.0);
        assert!(se < 1e-15);
    }

    #[test]
    fn jackknife_matches_mean_se_for_unit_denominators() {
        let x = [1.0, 3.0, 2.0, 7.0, 5.0];
        let (e, se) = jackknife_ratio(&x, &[1.0; 5]);
        let (m, s) = mean_se(&x);
        assert_relative_eq!(e, m);
        assert_relative_eq!(se, s, max_relative = 1e-12);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&a, &[10.0, 11.0]), 1.0);
        assert_relative_eq!(ks_critical(100, 100, 0.01), 1.6276 * (0.02f64).sqrt(), max_relative = 1e-4);
    }
}
