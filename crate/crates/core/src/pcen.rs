//! Precision cluster elastic net: elementwise L1 plus cluster fusion.
//!
//! With the partition fixed, each class update is an elastic-net penalized
//! precision problem in a shifted covariance, solved by [`gen_ista_solve`]
//! from the class's current iterate.

use nalgebra::DMatrix;

use crate::crf::shifted_cov;
use crate::error::Result;
use crate::fit::{alternate, diagonal_start, solve_by_cluster, ClusterSolution, FitResult, InnerSolution};
use crate::gen_ista::{gen_ista_solve, GenIstaConfig};
use crate::linalg;
use crate::model::{class_neg2_loglik, pcen_objective, ClassDataset, Partition, PenaltyConfig, PrecisionSet};

/// Weights `(γ1, γ2)` of the blockwise elastic-net problem for a class with
/// `n` observations in a cluster of size `card`.
pub fn block_weights(lambda1: f64, lambda2: f64, n: usize, card: usize) -> (f64, f64) {
    let (n, card) = (n as f64, card as f64);
    (lambda1 / n, lambda2 * (card - 1.0) / (2.0 * n * card))
}

fn cluster_objective(
    data: &ClassDataset,
    members: &[usize],
    omegas: &[DMatrix<f64>],
    cfg: &PenaltyConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (&c, om) in members.iter().zip(omegas) {
        let s = &data.classes[c];
        total += class_neg2_loglik(s.n, &s.cov, om)? + cfg.lambda1 * linalg::l1_norm(om);
    }
    let mut fusion = 0.0;
    for i in 0..omegas.len() {
        for j in (i + 1)..omegas.len() {
            fusion += linalg::frobenius_dist_sq(&omegas[i], &omegas[j]);
        }
    }
    Ok(total + 0.5 * cfg.lambda2 * fusion / omegas.len() as f64)
}

fn ista_config(cfg: &PenaltyConfig, gamma1: f64, gamma2: f64) -> GenIstaConfig {
    let mut ista = GenIstaConfig::new(gamma1, gamma2);
    ista.eps = (cfg.tol * 1e-3).max(1e-15);
    ista.kkt_tol = (cfg.tol * 1e-2).max(1e-12);
    ista.warm_step = true;
    ista
}

fn solve_cluster(
    data: &ClassDataset,
    members: &[usize],
    mut omegas: Vec<DMatrix<f64>>,
    cfg: &PenaltyConfig,
) -> Result<ClusterSolution> {
    let card = members.len();
    let mut prev = cluster_objective(data, members, &omegas, cfg)?;
    let mut sweeps = 0;
    let mut converged = false;
    let mut nonconverged_class = None;
    let mut ista_iterations = 0;
    let mut min_step: Option<f64> = None;
    while sweeps < cfg.inner_max_iter {
        sweeps += 1;
        let mut blocks_converged = true;
        for idx in 0..card {
            let c = members[idx];
            let (g1, g2) = block_weights(cfg.lambda1, cfg.lambda2, data.classes[c].n, card);
            let s_tilde = shifted_cov(data, members, &omegas, idx, cfg.lambda2);
            let res = gen_ista_solve(&s_tilde, &ista_config(cfg, g1, g2), Some(&omegas[idx]))?;
            ista_iterations += res.iterations;
            if let Some(t) = res.steps_used.iter().copied().reduce(f64::min) {
                min_step = Some(min_step.map_or(t, |m| m.min(t)));
            }
            if !res.converged {
                blocks_converged = false;
                nonconverged_class.get_or_insert(c);
            }
            omegas[idx] = res.omega;
        }
        let cur = cluster_objective(data, members, &omegas, cfg)?;
        let separable = card == 1 || cfg.lambda2 == 0.0;
        if separable || (prev - cur).abs() <= cfg.tol * (1.0 + cur.abs()) {
            converged = blocks_converged;
            break;
        }
        prev = cur;
    }
    if !converged && nonconverged_class.is_none() {
        nonconverged_class = members.first().copied();
    }
    Ok(ClusterSolution {
        members: members.to_vec(),
        omegas,
        sweeps,
        converged,
        nonconverged_class: if converged { None } else { nonconverged_class },
        ista_iterations,
        min_step,
    })
}

/// Fixed-partition PCEN solve by cyclic blockwise elastic-net updates, from `start`.
pub fn pcen_inner_solve_from(
    data: &ClassDataset,
    part: &Partition,
    cfg: &PenaltyConfig,
    start: &PrecisionSet,
) -> Result<InnerSolution> {
    cfg.validate(data.n_classes())?;
    solve_by_cluster(part, start, |members, init| solve_cluster(data, members, init, cfg))
}

/// Fixed-partition PCEN solve from the diagonal start.
pub fn pcen_inner_solve(
    data: &ClassDataset,
    part: &Partition,
    cfg: &PenaltyConfig,
) -> Result<InnerSolution> {
    pcen_inner_solve_from(data, part, cfg, &diagonal_start(data)?)
}

/// Alternates k-means partition updates and fixed-partition PCEN solves.
pub fn pcen_fit(data: &ClassDataset, cfg: &PenaltyConfig, rng_seed: u64) -> Result<FitResult> {
    alternate(
        data,
        cfg,
        rng_seed,
        |om, part| pcen_objective(data, om, part, cfg),
        |part, om| pcen_inner_solve_from(data, part, cfg, om),
    )
}
