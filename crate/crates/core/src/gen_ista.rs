//! Proximal gradient solver for the elastic-net penalized precision problem
//!
//! ```text
//! minimize  tr(S̃Ω) - logdet Ω + γ1 ||Ω||_1 + γ2 ||Ω||_F^2   over Ω ≻ 0
//! ```
//!
//! where S̃ may be indefinite. Each iteration takes a gradient step on the
//! smooth part and soft-thresholds the result. The step is either found by
//! backtracking (accept when the candidate is positive definite and the
//! quadratic majorizer holds) or fixed at the analytic step from
//! [`SpectralBounds`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{soft_threshold, SpectralBounds};

/// Ridge weight substituted for a zero L1 weight when computing bounds.
const TINY_GAMMA1: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepMode {
    Backtracking,
    FixedTheory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenIstaConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Relative change of the full objective that ends the iteration.
    pub eps: f64,
    /// Largest KKT violation accepted at termination, relative to `max(1, max|S̃|)`.
    pub kkt_tol: f64,
    pub eta_backtrack: f64,
    pub t0: f64,
    /// Start each backtracking search at `min(t0, t_prev / eta)` instead of `t0`.
    pub warm_step: bool,
    pub max_iter: usize,
    pub step_mode: StepMode,
}

impl GenIstaConfig {
    pub fn new(gamma1: f64, gamma2: f64) -> Self {
        Self {
            gamma1,
            gamma2,
            eps: 1e-8,
            kkt_tol: 1e-7,
            eta_backtrack: 0.5,
            t0: 1.0,
            warm_step: false,
            max_iter: 5000,
            step_mode: StepMode::Backtracking,
        }
    }

    pub fn fixed_theory(mut self) -> Self {
        self.step_mode = StepMode::FixedTheory;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite()) {
            return Err(Error::Parameter(format!("gamma1 must be >= 0, got {}", self.gamma1)));
        }
        if !(self.gamma2 >= 0.0 && self.gamma2.is_finite()) {
            return Err(Error::Parameter(format!("gamma2 must be >= 0, got {}", self.gamma2)));
        }
        if !(self.eta_backtrack > 0.0 && self.eta_backtrack < 1.0) {
            return Err(Error::Parameter("backtracking factor must lie in (0, 1)".into()));
        }
        if !(self.t0 > 0.0 && self.eps > 0.0 && self.kkt_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Parameter("step, tolerances and max_iter must be positive".into()));
        }
        if self.step_mode == StepMode::FixedTheory && self.gamma2 <= 0.0 {
            return Err(Error::Parameter("fixed theory step requires gamma2 > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenIstaResult {
    pub omega: DMatrix<f64>,
    /// Full objective at the start point and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub steps_used: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Smooth part `tr(S̃Ω) - logdet Ω + γ2 ||Ω||_F^2`.
pub fn smooth_objective(s_tilde: &DMatrix<f64>, omega: &DMatrix<f64>, gamma2: f64) -> Result<f64> {
    Ok(linalg::trace_product(s_tilde, omega) - linalg::logdet(omega)?
        + gamma2 * linalg::frobenius_sq(omega))
}

pub fn full_objective(
    s_tilde: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    gamma1: f64,
    gamma2: f64,
) -> Result<f64> {
    Ok(smooth_objective(s_tilde, omega, gamma2)? + gamma1 * linalg::l1_norm(omega))
}

fn smooth_gradient(
    s_tilde: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    omega_inv: &DMatrix<f64>,
    gamma2: f64,
) -> DMatrix<f64> {
    s_tilde - omega_inv + omega * (2.0 * gamma2)
}

/// `f(Ω + D) - f(Ω) - <∇f(Ω), D>` for the smooth part `f`, given the
/// Cholesky factor `L` of `Ω`. Evaluated through the eigenvalues `μ` of
/// `L⁻¹ D L⁻ᵀ` as `Σ (μ - ln(1 + μ)) + γ2 ||D||_F^2`, which stays accurate when
/// `D` is tiny. Infinite when `Ω + D` is not positive definite.
pub fn bregman_excess(chol_l: &DMatrix<f64>, diff: &DMatrix<f64>, gamma2: f64) -> Result<f64> {
    let x = chol_l
        .solve_lower_triangular(diff)
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let m = chol_l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let mu = linalg::eigenvalues(&m)?;
    if mu.iter().any(|&v| v <= -1.0) {
        return Ok(f64::INFINITY);
    }
    Ok(mu.iter().map(|&v| v - v.ln_1p()).sum::<f64>() + gamma2 * linalg::frobenius_sq(diff))
}

/// Right side minus left side of the quadratic majorization of the smooth
/// part around `omega_old`, evaluated at `omega_new`. Nonnegative means the
/// step `t` is acceptable.
pub fn majorizer_gap(
    omega_new: &DMatrix<f64>,
    omega_old: &DMatrix<f64>,
    gamma2: f64,
    t: f64,
) -> Result<f64> {
    let chol = linalg::cholesky(omega_old)
        .ok_or_else(|| Error::Domain("omega_old is not positive definite".into()))?;
    let diff = omega_new - omega_old;
    Ok(linalg::frobenius_sq(&diff) / (2.0 * t) - bregman_excess(&chol.l(), &diff, gamma2)?)
}

/// Largest violation of the subgradient optimality conditions.
pub fn kkt_residual(
    s_tilde: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    omega_inv: &DMatrix<f64>,
    gamma1: f64,
    gamma2: f64,
) -> f64 {
    let grad = smooth_gradient(s_tilde, omega, omega_inv, gamma2);
    grad.iter()
        .zip(omega.iter())
        .map(|(&g, &w)| {
            if w != 0.0 {
                (g + gamma1 * w.signum()).abs()
            } else {
                (g.abs() - gamma1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Start point: inverse diagonal of S̃ when it is positive, else `alpha I`.
pub fn default_start(s_tilde: &DMatrix<f64>, gamma1: f64, gamma2: f64) -> Result<DMatrix<f64>> {
    let p = s_tilde.nrows();
    let diag = s_tilde.diagonal();
    if diag.iter().all(|&d| d > 0.0) {
        return Ok(DMatrix::from_diagonal(&diag.map(|d| 1.0 / d)));
    }
    if gamma2 > 0.0 {
        let b = SpectralBounds::compute(s_tilde, gamma1.max(TINY_GAMMA1), gamma2)?;
        return Ok(DMatrix::identity(p, p) * b.alpha);
    }
    Ok(DMatrix::identity(p, p))
}

pub fn gen_ista_solve(
    s_tilde: &DMatrix<f64>,
    cfg: &GenIstaConfig,
    omega0: Option<&DMatrix<f64>>,
) -> Result<GenIstaResult> {
    gen_ista_solve_observed(s_tilde, cfg, omega0, |_, _| {})
}

/// As [`gen_ista_solve`], calling `observe(k, Ω^(k))` for the start point and
/// every accepted iterate.
pub fn gen_ista_solve_observed(
    s_tilde: &DMatrix<f64>,
    cfg: &GenIstaConfig,
    omega0: Option<&DMatrix<f64>>,
    mut observe: impl FnMut(usize, &DMatrix<f64>),
) -> Result<GenIstaResult> {
    cfg.validate()?;
    if !s_tilde.is_square() {
        return Err(Error::Shape("S̃ must be square".into()));
    }
    if !linalg::is_symmetric(s_tilde, 1e-10) {
        return Err(Error::Shape("S̃ must be symmetric".into()));
    }
    let p = s_tilde.nrows();
    let (g1, g2) = (cfg.gamma1, cfg.gamma2);

    let fixed_step = match cfg.step_mode {
        StepMode::FixedTheory => {
            Some(SpectralBounds::compute(s_tilde, g1.max(TINY_GAMMA1), g2)?.fixed_step())
        }
        StepMode::Backtracking => None,
    };

    let mut omega = match omega0 {
        Some(w) if w.shape() == (p, p) => linalg::symmetrize(w),
        Some(_) => return Err(Error::Shape(format!("start point must be {p}x{p}"))),
        None => default_start(s_tilde, g1, g2)?,
    };
    let chol = linalg::cholesky(&omega)
        .ok_or_else(|| Error::Domain("start point is not positive definite".into()))?;
    let mut omega_inv = linalg::symmetrize(&chol.inverse());
    let f_start = linalg::trace_product(s_tilde, &omega) - linalg::logdet_from_cholesky(&chol)
        + g2 * linalg::frobenius_sq(&omega);
    let mut obj_cur = f_start + g1 * linalg::l1_norm(&omega);

    let mut trace = vec![obj_cur];
    let mut steps = Vec::new();
    let mut converged = false;
    let mut kkt = kkt_residual(s_tilde, &omega, &omega_inv, g1, g2);
    observe(0, &omega);

    let kkt_limit = cfg.kkt_tol * linalg::max_abs(s_tilde).max(1.0);
    let mut chol_l = chol.l();
    let mut k = 0;
    let mut t_prev = cfg.t0;
    while k < cfg.max_iter {
        let grad = smooth_gradient(s_tilde, &omega, &omega_inv, g2);
        let t_start = if cfg.warm_step { cfg.t0.min(t_prev / cfg.eta_backtrack) } else { cfg.t0 };
        let mut t = fixed_step.unwrap_or(t_start);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = linalg::symmetrize(&soft_threshold(&(&omega - &grad * t), t * g1));
            let Some(chol) = linalg::cholesky(&cand) else {
                if fixed_step.is_some() {
                    return Err(Error::Numeric(
                        "fixed step left the positive definite cone".into(),
                    ));
                }
                t *= cfg.eta_backtrack;
                continue;
            };
            if fixed_step.is_none() {
                let diff = &cand - &omega;
                if bregman_excess(&chol_l, &diff, g2)? > linalg::frobenius_sq(&diff) / (2.0 * t) {
                    t *= cfg.eta_backtrack;
                    continue;
                }
            }
            let f_new = linalg::trace_product(s_tilde, &cand) - linalg::logdet_from_cholesky(&chol)
                + g2 * linalg::frobenius_sq(&cand);
            accepted = Some((cand, chol, f_new));
            break;
        }
        let Some((cand, chol, f_new)) = accepted else {
            // no representable step satisfies the majorizer: numerically stationary
            break;
        };
        k += 1;
        omega = cand;
        omega_inv = linalg::symmetrize(&chol.inverse());
        chol_l = chol.l();
        let obj_new = f_new + g1 * linalg::l1_norm(&omega);
        let change = (obj_new - obj_cur).abs();
        obj_cur = obj_new;
        trace.push(obj_cur);
        steps.push(t);
        t_prev = t;
        observe(k, &omega);

        if change <= cfg.eps * (1.0 + obj_cur.abs()) {
            kkt = kkt_residual(s_tilde, &omega, &omega_inv, g1, g2);
            if kkt <= kkt_limit {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = kkt_residual(s_tilde, &omega, &omega_inv, g1, g2);
        converged = kkt <= kkt_limit;
    }
    Ok(GenIstaResult {
        omega,
        objective_trace: trace,
        steps_used: steps,
        iterations: k,
        converged,
        kkt_residual: kkt,
    })
}
