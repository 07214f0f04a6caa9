//! Expected improvement for minimization.
//!
//! With incumbent `f_best`, exploration margin `xi`, and posterior moments
//! `(mu, sigma)` at a candidate:
//!
//! ```text
//! z  = (f_best - mu - xi) / sigma
//! EI = (f_best - mu - xi) * Phi(z) + sigma * phi(z)
//! ```
//!
//! and `EI = max(0, f_best - mu - xi)` when `sigma` is numerically zero.

use super::gp::GpModel;

/// Exploration margin applied to the incumbent.
pub const EI_XI: f64 = 0.01;

const SIGMA_FLOOR: f64 = 1e-12;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Abramowitz & Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Closed-form expected improvement from posterior moments.
pub fn expected_improvement_from_moments(mu: f64, sigma: f64, f_best: f64) -> f64 {
    let gap = f_best - mu - EI_XI;
    if sigma < SIGMA_FLOOR {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    (gap * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Expected improvement of candidate `x` under `model` against `f_best`.
pub fn expected_improvement(model: &GpModel, x: &[f64], f_best: f64) -> f64 {
    let (mu, variance) = model.predict(x);
    expected_improvement_from_moments(mu, variance.sqrt(), f_best)
}
