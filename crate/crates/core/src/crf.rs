//! Cluster ridge fusion: squared-Frobenius ridge plus cluster fusion.
//!
//! With the partition fixed, each class update is a ridge precision problem
//! with a shifted covariance and has a closed form through the
//! eigendecomposition of the shifted covariance.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::fit::{alternate, diagonal_start, solve_by_cluster, ClusterSolution, FitResult, InnerSolution};
use crate::linalg;
use crate::model::{class_neg2_loglik, crf_objective, ClassDataset, Partition, PenaltyConfig, PrecisionSet};
use crate::operators::ridge_precision_solve;

/// CRF objective restricted to one cluster.
fn cluster_objective(
    data: &ClassDataset,
    members: &[usize],
    omegas: &[DMatrix<f64>],
    cfg: &PenaltyConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (&c, om) in members.iter().zip(omegas) {
        let s = &data.classes[c];
        total += class_neg2_loglik(s.n, &s.cov, om)? + 0.5 * cfg.lambda1 * linalg::frobenius_sq(om);
    }
    let mut fusion = 0.0;
    for i in 0..omegas.len() {
        for j in (i + 1)..omegas.len() {
            fusion += linalg::frobenius_dist_sq(&omegas[i], &omegas[j]);
        }
    }
    Ok(total + 0.5 * cfg.lambda2 * fusion / omegas.len() as f64)
}

/// Shifted covariance `S_c - λ2/(n_c card) Σ_{m≠c} Ω_m` of the blockwise update.
pub(crate) fn shifted_cov(
    data: &ClassDataset,
    members: &[usize],
    omegas: &[DMatrix<f64>],
    idx: usize,
    lambda2: f64,
) -> DMatrix<f64> {
    let c = members[idx];
    let s = &data.classes[c];
    if lambda2 == 0.0 || members.len() == 1 {
        return s.cov.clone();
    }
    let p = s.cov.nrows();
    let mut others = DMatrix::zeros(p, p);
    for (k, om) in omegas.iter().enumerate() {
        if k != idx {
            others += om;
        }
    }
    &s.cov - others * (lambda2 / (s.n as f64 * members.len() as f64))
}

fn solve_cluster(
    data: &ClassDataset,
    members: &[usize],
    mut omegas: Vec<DMatrix<f64>>,
    cfg: &PenaltyConfig,
) -> Result<ClusterSolution> {
    let card = members.len() as f64;
    let separable = members.len() == 1 || cfg.lambda2 == 0.0;
    let mut prev = cluster_objective(data, members, &omegas, cfg)?;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.inner_max_iter {
        sweeps += 1;
        for idx in 0..members.len() {
            let n = data.classes[members[idx]].n as f64;
            let s_tilde = shifted_cov(data, members, &omegas, idx, cfg.lambda2);
            let eta = (cfg.lambda1 + cfg.lambda2 * (card - 1.0) / card) / (2.0 * n);
            omegas[idx] = ridge_precision_solve(&s_tilde, eta)?;
        }
        let cur = cluster_objective(data, members, &omegas, cfg)?;
        if separable || (prev - cur).abs() <= cfg.tol * (1.0 + cur.abs()) {
            converged = true;
            break;
        }
        prev = cur;
    }
    Ok(ClusterSolution {
        members: members.to_vec(),
        omegas,
        sweeps,
        converged,
        nonconverged_class: if converged { None } else { members.first().copied() },
        ista_iterations: 0,
        min_step: None,
    })
}

/// Fixed-partition CRF solve by cyclic blockwise closed-form updates, from `start`.
pub fn crf_inner_solve_from(
    data: &ClassDataset,
    part: &Partition,
    cfg: &PenaltyConfig,
    start: &PrecisionSet,
) -> Result<InnerSolution> {
    cfg.validate(data.n_classes())?;
    solve_by_cluster(part, start, |members, init| solve_cluster(data, members, init, cfg))
}

/// Fixed-partition CRF solve from the diagonal start.
pub fn crf_inner_solve(
    data: &ClassDataset,
    part: &Partition,
    cfg: &PenaltyConfig,
) -> Result<InnerSolution> {
    crf_inner_solve_from(data, part, cfg, &diagonal_start(data)?)
}

/// Alternates k-means partition updates and fixed-partition CRF solves.
pub fn crf_fit(data: &ClassDataset, cfg: &PenaltyConfig, rng_seed: u64) -> Result<FitResult> {
    alternate(
        data,
        cfg,
        rng_seed,
        |om, part| crf_objective(data, om, part, cfg),
        |part, om| crf_inner_solve_from(data, part, cfg, om),
    )
}
