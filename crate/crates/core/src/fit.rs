//! Outer alternation shared by CRF and PCEN: k-means partition update, then
//! the fixed-partition precision update, until the partition repeats.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusterer::kmeans_partition_from;
use crate::error::{Error, Result};
use crate::model::{ClassDataset, Partition, PenaltyConfig, PrecisionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Full objective after every partition update and every precision update.
    pub objective_trace: Vec<f64>,
    pub partition_history: Vec<Partition>,
    pub outer_iterations: usize,
    /// Blockwise sweeps used by each inner solve.
    pub inner_sweeps: Vec<usize>,
    /// Partition repeated before `max_iter` rounds.
    pub converged: bool,
    /// Every inner solve met its tolerance.
    pub inner_converged: bool,
    /// First class whose block subproblem failed to converge, if any.
    pub nonconverged_class: Option<usize>,
    /// Total proximal-gradient iterations (PCEN only).
    pub ista_iterations: usize,
    /// Smallest accepted proximal-gradient step (PCEN only).
    pub min_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub omegas: PrecisionSet,
    pub partition: Partition,
    pub report: SolverReport,
}

/// Result of one fixed-partition solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub omegas: PrecisionSet,
    /// Largest sweep count over clusters.
    pub sweeps: usize,
    pub converged: bool,
    pub nonconverged_class: Option<usize>,
    pub ista_iterations: usize,
    pub min_step: Option<f64>,
}

/// Outcome of the blockwise solve of one cluster.
pub(crate) struct ClusterSolution {
    pub members: Vec<usize>,
    pub omegas: Vec<DMatrix<f64>>,
    pub sweeps: usize,
    pub converged: bool,
    pub nonconverged_class: Option<usize>,
    pub ista_iterations: usize,
    pub min_step: Option<f64>,
}

/// Runs `solve_cluster` on every block concurrently and reassembles the set.
pub(crate) fn solve_by_cluster<F>(
    part: &Partition,
    start: &PrecisionSet,
    solve_cluster: F,
) -> Result<InnerSolution>
where
    F: Fn(&[usize], Vec<DMatrix<f64>>) -> Result<ClusterSolution> + Sync,
{
    let blocks = part.blocks();
    let solved: Vec<ClusterSolution> = blocks
        .par_iter()
        .map(|members| {
            let init = members.iter().map(|&c| start[c].clone()).collect();
            solve_cluster(members, init)
        })
        .collect::<Result<_>>()?;
    let mut omegas = start.0.clone();
    let mut out = InnerSolution {
        omegas: PrecisionSet(Vec::new()),
        sweeps: 0,
        converged: true,
        nonconverged_class: None,
        ista_iterations: 0,
        min_step: None,
    };
    for cs in solved {
        for (&c, m) in cs.members.iter().zip(cs.omegas) {
            omegas[c] = m;
        }
        out.sweeps = out.sweeps.max(cs.sweeps);
        out.converged &= cs.converged;
        out.nonconverged_class = match (out.nonconverged_class, cs.nonconverged_class) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        out.ista_iterations += cs.ista_iterations;
        out.min_step = match (out.min_step, cs.min_step) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
    out.omegas = PrecisionSet(omegas);
    Ok(out)
}

/// Diagonal start `diag(1 / S_jj)` for every class.
pub fn diagonal_start(data: &ClassDataset) -> Result<PrecisionSet> {
    data.classes
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let diag = s.cov.diagonal();
            if let Some(j) = diag.iter().position(|&d| !(d > 0.0)) {
                return Err(Error::Init(format!(
                    "class {c} has zero sample variance in variable {j}; cannot form the diagonal start"
                )));
            }
            Ok(DMatrix::from_diagonal(&diag.map(|d| 1.0 / d)))
        })
        .collect::<Result<_>>()
        .map(PrecisionSet)
}

fn round_seed(seed: u64, round: usize) -> u64 {
    seed ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub(crate) fn alternate<O, I>(
    data: &ClassDataset,
    cfg: &PenaltyConfig,
    rng_seed: u64,
    objective: O,
    inner: I,
) -> Result<FitResult>
where
    O: Fn(&PrecisionSet, &Partition) -> Result<f64>,
    I: Fn(&Partition, &PrecisionSet) -> Result<InnerSolution>,
{
    data.validate()?;
    cfg.validate(data.n_classes())?;
    let mut omegas = diagonal_start(data)?;
    let mut current: Option<Partition> = None;
    let mut report = SolverReport {
        objective_trace: Vec::new(),
        partition_history: Vec::new(),
        outer_iterations: 0,
        inner_sweeps: Vec::new(),
        converged: false,
        inner_converged: true,
        nonconverged_class: None,
        ista_iterations: 0,
        min_step: None,
    };

    for round in 0..cfg.max_iter {
        let km = kmeans_partition_from(
            &omegas,
            cfg.q,
            cfg.n_starts,
            round_seed(rng_seed, round),
            current.as_ref(),
        )?;
        let part = km.partition;
        if current.as_ref().is_some_and(|prev| prev.equivalent(&part)) {
            report.converged = true;
            break;
        }
        report.outer_iterations = round + 1;
        report.objective_trace.push(objective(&omegas, &part)?);
        report.partition_history.push(part.clone());

        let sol = inner(&part, &omegas)?;
        omegas = sol.omegas;
        report.objective_trace.push(objective(&omegas, &part)?);
        report.inner_sweeps.push(sol.sweeps);
        report.inner_converged &= sol.converged;
        if report.nonconverged_class.is_none() {
            report.nonconverged_class = sol.nonconverged_class;
        }
        report.ista_iterations += sol.ista_iterations;
        report.min_step = match (report.min_step, sol.min_step) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        current = Some(part);
    }
    let partition = current.expect("max_iter >= 1 guarantees one round");
    Ok(FitResult { omegas, partition, report })
}
