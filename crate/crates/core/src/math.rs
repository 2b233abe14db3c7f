//! Gamma-function helpers and small numeric utilities.

use statrs::function::gamma as sg;

pub use sg::{gamma, ln_gamma};

/// 1/Γ(x), which is zero at the poles x = 0, -1, -2, ...
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        0.0
    } else {
        1.0 / sg::gamma(x)
    }
}

/// Γ(a)/Γ(b) for positive arguments, through log-gamma.
pub fn gamma_ratio(a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    (sg::ln_gamma(a) - sg::ln_gamma(b)).exp()
}

/// Γ(a)/Γ(b) allowing non-positive arguments where the gammas are finite or
/// the denominator has a pole.
pub fn gamma_ratio_signed(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        gamma_ratio(a, b)
    } else {
        sg::gamma(a) * recip_gamma(b)
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::PI.powf(h) / sg::gamma(h + 1.0)
}

/// Relative difference with an absolute floor of 1 in the denominator scale.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reciprocal_gamma_at_poles() {
        assert_eq!(recip_gamma(0.0), 0.0);
        assert_eq!(recip_gamma(-3.0), 0.0);
        assert_relative_eq!(recip_gamma(4.0), 1.0 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn ratio_matches_direct() {
        assert_relative_eq!(gamma_ratio(5.5, 2.5), gamma(5.5) / gamma(2.5), max_relative = 1e-13);
        assert_relative_eq!(gamma_ratio_signed(-0.5, 1.5), gamma(-0.5) / gamma(1.5), max_relative = 1e-13);
    }

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(2), std::f64::consts::PI, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(3), 4.0 / 3.0 * std::f64::consts::PI, max_relative = 1e-14);
    }
}
