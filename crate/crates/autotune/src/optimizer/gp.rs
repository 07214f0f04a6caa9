//! Gaussian-process surrogate over the unit hypercube.
//!
//! Matérn 3/2 covariance with isotropic lengthscale:
//! `k(r) = sf2 * (1 + sqrt(3) r / l) * exp(-sqrt(3) r / l)` with `r` the
//! Euclidean distance between unit-cube points. Targets are standardized to
//! zero mean and unit variance before fitting (unit divisor when the
//! variance is zero); the posterior mean is reported back in original
//! units, the posterior variance in kernel units, so it reverts to `sf2`
//! far from data.
//!
//! Hyperparameters come from an exhaustive grid search over the log
//! marginal likelihood — small fixed grids keep the whole optimizer
//! deterministic and dependency-free.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use super::linalg::{cholesky, cholesky_solve, solve_lower};
use super::Observation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("cannot fit a model with zero observations")]
    NoObservations,
    #[error("hyperparameter selection needs at least two observations")]
    NeedTwoObservations,
    #[error("observation {index} has a non-finite target")]
    NonFiniteTarget { index: usize },
    #[error("observation {index} has a non-finite coordinate")]
    NonFiniteCoordinate { index: usize },
    #[error("observation {index} has {got} coordinates, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("hyperparameter {0} must be positive and finite")]
    BadHyper(&'static str),
    #[error("covariance factorization failed even after jitter escalation")]
    FactorizationFailed,
}

/// Kernel and noise hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyper {
    fn validate(&self) -> Result<(), GpError> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(GpError::BadHyper("lengthscale"));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(GpError::BadHyper("signal_variance"));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(GpError::BadHyper("noise_variance"));
        }
        Ok(())
    }
}

/// Grid searched by [`gp_select_hypers`], in tie-break (lexicographic) order.
pub const LENGTHSCALE_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
pub const SIGNAL_VARIANCE_GRID: [f64; 3] = [0.5, 1.0, 2.0];
pub const NOISE_VARIANCE_GRID: [f64; 3] = [1e-6, 1e-4, 1e-2];

/// Matérn 3/2 covariance at distance `r`.
pub fn matern32(r: f64, lengthscale: f64, signal_variance: f64) -> f64 {
    let s = 3f64.sqrt() * r / lengthscale;
    signal_variance * (1.0 + s) * (-s).exp()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A fitted surrogate. Immutable after fit and freely shareable; the only
/// interior state is the variance-floor counter.
pub struct GpModel {
    points: Vec<Vec<f64>>,
    dim: usize,
    hyper: GpHyper,
    y_mean: f64,
    y_scale: f64,
    y_std: Vec<f64>,
    /// Lower Cholesky factor of `K + (noise + jitter) I`.
    chol: Vec<f64>,
    /// `(K + noise I)^-1 y_std`.
    alpha: Vec<f64>,
    /// Sum of per-point log diagonal of the factor (half the log det).
    log_diag_sum: f64,
    jitter: f64,
    variance_floor_events: AtomicU64,
}

fn standardize(ys: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    (mean, scale, ys.iter().map(|y| (y - mean) / scale).collect())
}

fn check_observations(observations: &[Observation]) -> Result<usize, GpError> {
    let dim = observations[0].point.len();
    for (index, o) in observations.iter().enumerate() {
        if o.point.len() != dim {
            return Err(GpError::DimensionMismatch {
                index,
                expected: dim,
                got: o.point.len(),
            });
        }
        if o.point.iter().any(|c| !c.is_finite()) {
            return Err(GpError::NonFiniteCoordinate { index });
        }
        if !o.value.is_finite() {
            return Err(GpError::NonFiniteTarget { index });
        }
    }
    Ok(dim)
}

/// Factor `K + noise I`, escalating diagonal jitter from 1e-10 by factors
/// of ten up to 1e-4 before giving up.
fn factor_with_jitter(kernel: &[f64], n: usize, noise: f64) -> Result<(Vec<f64>, f64), GpError> {
    let mut jitter = 0.0;
    loop {
        let mut a = kernel.to_vec();
        for i in 0..n {
            a[i * n + i] += noise + jitter;
        }
        if let Ok(l) = cholesky(&a, n) {
            return Ok((l, jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > 1e-4 {
            return Err(GpError::FactorizationFailed);
        }
    }
}

/// Fit a model with fixed hyperparameters.
pub fn gp_fit(observations: &[Observation], hyper: GpHyper) -> Result<GpModel, GpError> {
    if observations.is_empty() {
        return Err(GpError::NoObservations);
    }
    hyper.validate()?;
    let dim = check_observations(observations)?;
    let n = observations.len();
    let (y_mean, y_scale, y_std) = standardize(
        &observations.iter().map(|o| o.value).collect::<Vec<_>>(),
    );

    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = matern32(
                euclidean(&observations[i].point, &observations[j].point),
                hyper.lengthscale,
                hyper.signal_variance,
            );
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let (chol, jitter) = factor_with_jitter(&kernel, n, hyper.noise_variance)?;

    let mut alpha = y_std.clone();
    cholesky_solve(&chol, n, &mut alpha);
    let log_diag_sum = (0..n).map(|i| chol[i * n + i].ln()).sum();

    Ok(GpModel {
        points: observations.iter().map(|o| o.point.clone()).collect(),
        dim,
        hyper,
        y_mean,
        y_scale,
        y_std,
        chol,
        alpha,
        log_diag_sum,
        jitter,
        variance_floor_events: AtomicU64::new(0),
    })
}

impl GpModel {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean (original units) and variance (kernel units, floored
    /// at zero) at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.points.len();
        let mut k_star: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                matern32(
                    euclidean(x, p),
                    self.hyper.lengthscale,
                    self.hyper.signal_variance,
                )
            })
            .collect();
        let mean_std: f64 = k_star.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        solve_lower(&self.chol, n, &mut k_star);
        let explained: f64 = k_star.iter().map(|v| v * v).sum();
        let mut variance = self.hyper.signal_variance - explained;
        if variance < 0.0 {
            self.variance_floor_events.fetch_add(1, Ordering::Relaxed);
            variance = 0.0;
        }
        (self.y_mean + self.y_scale * mean_std, variance)
    }

    /// Times a prediction's raw variance went negative and was floored.
    pub fn variance_floor_events(&self) -> u64 {
        self.variance_floor_events.load(Ordering::Relaxed)
    }

    /// Log marginal likelihood of the standardized targets under this fit.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.points.len() as f64;
        let fit_term: f64 = self.y_std.iter().zip(&self.alpha).map(|(y, a)| y * a).sum();
        -0.5 * fit_term - self.log_diag_sum - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Exhaustive grid search maximizing the log marginal likelihood of the
/// standardized targets. Ties go to the smallest `(lengthscale,
/// signal_variance, noise_variance)` in lexicographic grid order. Grid
/// cells whose covariance cannot be factored are skipped.
pub fn gp_select_hypers(observations: &[Observation]) -> Result<GpHyper, GpError> {
    if observations.len() < 2 {
        return Err(GpError::NeedTwoObservations);
    }
    let mut best: Option<(f64, GpHyper)> = None;
    for &lengthscale in &LENGTHSCALE_GRID {
        for &signal_variance in &SIGNAL_VARIANCE_GRID {
            for &noise_variance in &NOISE_VARIANCE_GRID {
                let hyper = GpHyper {
                    lengthscale,
                    signal_variance,
                    noise_variance,
                };
                let model = match gp_fit(observations, hyper) {
                    Ok(m) => m,
                    Err(GpError::FactorizationFailed) => continue,
                    Err(e) => return Err(e),
                };
                let lml = model.log_marginal_likelihood();
                if !lml.is_finite() {
                    continue;
                }
                match &best {
                    Some((best_lml, _)) if lml <= *best_lml => {}
                    _ => best = Some((lml, hyper)),
                }
            }
        }
    }
    best.map(|(_, h)| h).ok_or(GpError::FactorizationFailed)
}
