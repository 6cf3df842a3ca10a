//! Closed-form building blocks of the elastic-net precision subproblem:
//! soft thresholding, the ridge eigenvalue map, the ridge precision solve,
//! and the spectral bounds that drive the fixed-step analysis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Elementwise soft thresholding `sign(a) max(|a| - tau, 0)`.
pub fn soft_threshold(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    debug_assert!(tau >= 0.0);
    a.map(|v| v.signum() * (v.abs() - tau).max(0.0))
}

/// Positive root of `2 eta w^2 + a w - 1 = 0`, the minimizer of
/// `a w - ln w + eta w^2` over `w > 0`.
pub fn ridge_eig(a: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("ridge weight must be positive, got {eta}")));
    }
    if !a.is_finite() {
        return Err(Error::Domain(format!("non-finite eigenvalue {a}")));
    }
    let root = (a * a + 8.0 * eta).sqrt();
    // both forms are exact; pick the one without cancellation
    Ok(if a >= 0.0 { 2.0 / (a + root) } else { (root - a) / (4.0 * eta) })
}

/// `argmin_{Θ ≻ 0} tr(AΘ) - logdet Θ + eta ||Θ||_F^2`, for any symmetric `A`.
pub fn ridge_precision_solve(a: &DMatrix<f64>, eta: f64) -> Result<DMatrix<f64>> {
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("ridge weight must be positive, got {eta}")));
    }
    let eig = linalg::sym_eigen(a)?;
    let weights = eig.values.iter().map(|&d| ridge_eig(d, eta)).collect::<Result<Vec<_>>>()?;
    let mut i = 0;
    Ok(eig.map(|_| {
        i += 1;
        weights[i - 1]
    }))
}

/// Eigenvalue bounds `alpha I ⪯ Ω* ⪯ beta I` for the minimizer of
/// `tr(S̃Ω) - logdet Ω + γ1 ||Ω||_1 + γ2 ||Ω||_F^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionBounds {
    pub alpha: f64,
    pub beta: f64,
}

pub fn solution_bounds(
    s_tilde: &DMatrix<f64>,
    gamma1: f64,
    gamma2: f64,
) -> Result<SolutionBounds> {
    let eig = linalg::eigenvalues(s_tilde)?;
    Ok(bounds_from_extremes(eig[eig.len() - 1], eig[0], gamma1, gamma2, s_tilde.nrows()))
}

/// Bounds from the extreme eigenvalues `rho_max >= rho_min` of S̃.
pub fn bounds_from_extremes(
    rho_max: f64,
    rho_min: f64,
    gamma1: f64,
    gamma2: f64,
    p: usize,
) -> SolutionBounds {
    let shift = gamma1 * p as f64;
    let inv = |a: f64| 0.5 * (a + (a * a + 8.0 * gamma2).sqrt());
    SolutionBounds { alpha: 1.0 / inv(rho_max + shift), beta: 1.0 / inv(rho_min - shift) }
}

/// Lipschitz constant of `∇f(Ω) = S̃ - Ω^-1 + 2γ2 Ω` on `{Ω ⪰ alpha I}`.
pub fn lipschitz_constant(alpha: f64, gamma2: f64, p: usize) -> f64 {
    (p as f64).sqrt() * (alpha.powi(-2) + 2.0 * gamma2)
}

/// Step-size quantities of the fixed-step convergence analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBounds {
    /// Largest step that keeps iterates above `alpha I`.
    pub t_max: f64,
    /// Step minimizing the worst-case contraction factor on `[alpha, b_prime]`.
    pub t_w: f64,
    /// Upper eigenvalue bound of the iterates, `beta + sqrt(p)(beta - alpha)`.
    pub b_prime: f64,
    /// Worst-case contraction factor at `t_w`.
    pub delta: f64,
}

pub fn step_bounds(alpha: f64, beta: f64, gamma2: f64, p: usize) -> StepBounds {
    let t_max = alpha * alpha / (2.0 * alpha * alpha * gamma2 + 1.0);
    let b_prime = beta + (p as f64).sqrt() * (beta - alpha);
    let a_inv2 = alpha.powi(-2);
    let b_inv2 = b_prime.powi(-2);
    let t_w = 2.0 / (4.0 * gamma2 + b_inv2 + a_inv2);
    let ratio = (2.0 * gamma2 + a_inv2) / (2.0 * gamma2 + b_inv2);
    let delta = 1.0 - 2.0 / (1.0 + ratio);
    StepBounds { t_max, t_w, b_prime, delta }
}

/// All analytic constants for one subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub alpha: f64,
    pub beta: f64,
    pub b_prime: f64,
    pub t_max: f64,
    pub t_w: f64,
    pub delta: f64,
    pub lipschitz: f64,
}

impl SpectralBounds {
    pub fn compute(s_tilde: &DMatrix<f64>, gamma1: f64, gamma2: f64) -> Result<Self> {
        if !(gamma2 > 0.0) {
            return Err(Error::Parameter(format!(
                "spectral bounds need a positive ridge weight, got {gamma2}"
            )));
        }
        let p = s_tilde.nrows();
        let SolutionBounds { alpha, beta } = solution_bounds(s_tilde, gamma1, gamma2)?;
        let steps = step_bounds(alpha, beta, gamma2, p);
        Ok(Self {
            alpha,
            beta,
            b_prime: steps.b_prime,
            t_max: steps.t_max,
            t_w: steps.t_w,
            delta: steps.delta,
            lipschitz: lipschitz_constant(alpha, gamma2, p),
        })
    }

    /// Fixed step used when the line search is switched off.
    pub fn fixed_step(&self) -> f64 {
        self.t_w.min(self.t_max)
    }
}
