//! Uncertainty calibration: choosing the scalar degrees of freedom
//! `phi = psi^{-1}` that govern belief uncertainty on the unexplored
//! subspaces.
//!
//! Three schemes: the mean of the known tail spectrum, a known noise floor
//! `eps^2` (kernel matrices damped by `eps^2 I` have all trailing eigenvalues
//! pinned there), and a 1-D GP regression on the log-Rayleigh quotients
//! `ln R(A, s_i)` collected during the solve, extrapolated to the remaining
//! `n - k` dimensions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::GaussianVector;
use crate::error::{Error, Result};
use crate::inference::ObservationBlock;

/// Calibration scheme for the unexplored-space uncertainty scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CalibrationMethod {
    /// Keep the prior's `phi`, `psi` untouched.
    None,
    /// `phi = mean(tail)` where `tail` are the not-yet-explored eigenvalues
    /// `lambda_{k+1..n}` of `A` (requires exactly `n - k` values).
    SpectrumMean { tail_eigenvalues: Vec<f64> },
    /// `phi = eps^2`, the damping floor of the spectrum.
    NoiseFloor { epsilon_sq: f64 },
    /// GP regression on `ln R(A, s_i)` over log-index inputs with prior mean
    /// `mu(i) = theta0 - theta1 ln(i)`; `phi = exp(mean predicted ln R)` over
    /// the remaining indices.
    RayleighGp(RayleighGpParams),
}

/// Hyperparameters of the Rayleigh-quotient GP regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighGpParams {
    /// Intercept of the prior mean; fitted by least squares when `None`.
    pub theta0: Option<f64>,
    /// Log-index decay slope; `nu + 1/2` for a `nu`-times differentiable
    /// kernel.
    pub theta1: f64,
    /// RBF lengthscale in log-index units.
    pub lengthscale: f64,
    /// Signal variance; empirical variance of the detrended targets when
    /// `None`.
    pub signal_var: Option<f64>,
    /// Observation noise added to the kernel diagonal.
    pub noise_var: f64,
    /// Experimental: clamp predictions from below at `ln(eps^2)` to keep the
    /// regression from tunneling through a known spectral floor.
    pub ln_floor: Option<f64>,
}

impl Default for RayleighGpParams {
    fn default() -> Self {
        Self {
            theta0: None,
            theta1: 2.0, // nu = 3/2 (Matern32-like decay)
            lengthscale: 1.0,
            signal_var: None,
            noise_var: 1e-6,
            ln_floor: None,
        }
    }
}

impl CalibrationMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            CalibrationMethod::None => Ok(()),
            CalibrationMethod::SpectrumMean { tail_eigenvalues } => {
                if tail_eigenvalues.iter().any(|&l| !(l > 0.0)) {
                    return Err(Error::InvalidArgument(
                        "tail eigenvalues must all be positive".into(),
                    ));
                }
                Ok(())
            }
            CalibrationMethod::NoiseFloor { epsilon_sq } => {
                if !(*epsilon_sq > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "noise floor eps^2 must be positive, got {epsilon_sq}"
                    )));
                }
                Ok(())
            }
            CalibrationMethod::RayleighGp(p) => {
                if !(p.lengthscale > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "GP lengthscale must be positive, got {}",
                        p.lengthscale
                    )));
                }
                if p.noise_var < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "GP noise variance must be nonnegative, got {}",
                        p.noise_var
                    )));
                }
                Ok(())
            }
        }
    }
}

/// One log-Rayleigh observation `ln R(A, s_i)` at 1-based iteration index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighSample {
    pub index: usize,
    pub log_rayleigh: f64,
}

/// Rayleigh quotients of the collected actions,
/// `R_i = (s_i^T y_i) / (s_i^T s_i)`, each bounded by the extreme
/// eigenvalues of `A`.
pub fn rayleigh_quotients(obs: &ObservationBlock) -> Result<Vec<RayleighSample>> {
    let mut out = Vec::with_capacity(obs.k());
    for j in 0..obs.k() {
        let s = obs.actions().column(j);
        let y = obs.observations().column(j);
        let ss = s.norm_squared();
        if ss == 0.0 {
            return Err(Error::DegenerateAction { index: j });
        }
        let r = s.dot(&y) / ss;
        if !(r > 0.0) {
            return Err(Error::Breakdown { s_dot_y: r });
        }
        out.push(RayleighSample {
            index: j + 1,
            log_rayleigh: r.ln(),
        });
    }
    Ok(out)
}

/// Exact GP regression on `(ln i, ln R_i - mu(i))` with an RBF kernel;
/// returns the predictive means `mu(i) + m(ln i)` at indices `k+1 ..= n`.
/// O(k^3) in the number of samples.
pub fn fit_rayleigh_gp(
    samples: &[RayleighSample],
    n: usize,
    params: &RayleighGpParams,
) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Rayleigh GP regression needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let k = samples.len();
    let xs: Vec<f64> = samples.iter().map(|s| (s.index as f64).ln()).collect();

    let theta1 = params.theta1;
    let theta0 = params.theta0.unwrap_or_else(|| {
        // Least-squares intercept given the slope.
        samples
            .iter()
            .map(|s| s.log_rayleigh + theta1 * (s.index as f64).ln())
            .sum::<f64>()
            / k as f64
    });
    let mu = |i: f64| theta0 - theta1 * i.ln();

    let targets: Vec<f64> = samples
        .iter()
        .map(|s| s.log_rayleigh - mu(s.index as f64))
        .collect();
    let signal_var = params.signal_var.unwrap_or_else(|| {
        let m = targets.iter().sum::<f64>() / k as f64;
        targets.iter().map(|t| (t - m).powi(2)).sum::<f64>() / k as f64
    });

    let ell2 = params.lengthscale * params.lengthscale;
    let rbf = |a: f64, b: f64| signal_var * (-(a - b) * (a - b) / (2.0 * ell2)).exp();

    let jitter = params.noise_var.max(1e-10);
    let mut gram = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gram[(i, j)] = rbf(xs[i], xs[j]);
        }
        gram[(i, i)] += jitter;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Conditioning("Rayleigh GP kernel Gram matrix is numerically singular".into())
    })?;
    let alpha = chol.solve(&DVector::from_vec(targets));

    let mut preds = Vec::with_capacity(n.saturating_sub(k));
    let first = samples.iter().map(|s| s.index).max().unwrap_or(k) + 1;
    for i in first..=n {
        let x_star = (i as f64).ln();
        let k_star = DVector::from_fn(k, |j, _| rbf(x_star, xs[j]));
        let mut pred = mu(i as f64) + k_star.dot(&alpha);
        if let Some(floor) = params.ln_floor {
            pred = pred.max(floor);
        }
        preds.push(pred);
    }
    Ok(preds)
}

/// Compute the calibrated `(phi, psi)` pair for the given method.
///
/// Returns `(0, 0)` for `None` (meaning "no override") and when `k = n`
/// (nothing unexplored). All other outputs satisfy `phi > 0`,
/// `psi = phi^{-1}`.
pub fn compute_phi_psi(
    method: &CalibrationMethod,
    obs: &ObservationBlock,
    n: usize,
) -> Result<(f64, f64)> {
    let k = obs.k();
    if matches!(method, CalibrationMethod::None) || k >= n {
        return Ok((0.0, 0.0));
    }
    let phi = match method {
        CalibrationMethod::None => unreachable!(),
        CalibrationMethod::SpectrumMean { tail_eigenvalues } => {
            if tail_eigenvalues.len() != n - k {
                return Err(Error::InvalidArgument(format!(
                    "spectrum tail must have n - k = {} entries, got {}",
                    n - k,
                    tail_eigenvalues.len()
                )));
            }
            tail_eigenvalues.iter().sum::<f64>() / (n - k) as f64
        }
        CalibrationMethod::NoiseFloor { epsilon_sq } => *epsilon_sq,
        CalibrationMethod::RayleighGp(params) => {
            let samples = rayleigh_quotients(obs)?;
            let preds = fit_rayleigh_gp(&samples, n, params)?;
            let mean_ln_r = preds.iter().sum::<f64>() / preds.len() as f64;
            mean_ln_r.exp()
        }
    };
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "calibration produced a non-positive phi = {phi}"
        )));
    }
    Ok((phi, 1.0 / phi))
}

/// Calibration ratio statistic
/// `w(x*) = ln(tr Cov[x]) / 2 - ln ||x* - E[x]||`:
/// zero when calibrated, positive when underconfident, negative when
/// overconfident. Conventions: `+inf` when the error is exactly zero,
/// `-inf` when the trace is zero but the error is not.
pub fn w_statistic(x_star: &DVector<f64>, belief: &GaussianVector) -> f64 {
    let err = (x_star - &belief.mean).norm();
    if err == 0.0 {
        return f64::INFINITY;
    }
    if belief.trace_cov <= 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * belief.trace_cov.ln() - err.ln()
}
