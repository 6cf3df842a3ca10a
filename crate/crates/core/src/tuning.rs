//! Tuning-parameter selection by stratified K-fold cross-validation of the
//! held-out Gaussian log-likelihood.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crf::crf_fit;
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::linalg;
use crate::model::{ClassDataset, LabeledData, PenaltyConfig, PrecisionSet};
use crate::pcen::pcen_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Crf,
    Pcen,
}

impl Method {
    pub fn fit(&self, data: &ClassDataset, cfg: &PenaltyConfig, rng_seed: u64) -> Result<FitResult> {
        match self {
            Method::Crf => crf_fit(data, cfg, rng_seed),
            Method::Pcen => pcen_fit(data, cfg, rng_seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Crf => "crf",
            Method::Pcen => "pcen",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crf" => Ok(Method::Crf),
            "pcen" => Ok(Method::Pcen),
            other => Err(Error::Parameter(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
    pub q_values: Vec<usize>,
    pub folds: usize,
    pub rng_seed: u64,
}

impl TuningGrid {
    pub fn new(lambda1_values: Vec<f64>, lambda2_values: Vec<f64>, q_values: Vec<usize>) -> Self {
        Self { lambda1_values, lambda2_values, q_values, folds: 5, rng_seed: 0 }
    }

    /// Grid points in lexicographic `(λ1, λ2, Q)` order.
    pub fn points(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for &l1 in &self.lambda1_values {
            for &l2 in &self.lambda2_values {
                for &q in &self.q_values {
                    out.push((l1, l2, q));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationScore {
    pub value: f64,
    /// Classes absent from the held-out data; they contribute zero.
    pub missing_classes: Vec<usize>,
}

/// Held-out log-likelihood `-½ Σ_c n_c (tr(S_c Ω_c) - logdet Ω_c)`, up to constants.
pub fn validation_loglik(omegas: &PrecisionSet, holdout: &ClassDataset) -> Result<ValidationScore> {
    if omegas.len() != holdout.n_classes() {
        return Err(Error::Shape(format!(
            "{} precision matrices for {} held-out classes",
            omegas.len(),
            holdout.n_classes()
        )));
    }
    let mut value = 0.0;
    let mut missing_classes = Vec::new();
    for (c, (s, om)) in holdout.classes.iter().zip(omegas.iter()).enumerate() {
        if s.n == 0 {
            missing_classes.push(c);
            continue;
        }
        value -= 0.5 * s.n as f64 * (linalg::trace_product(&s.cov, om) - linalg::logdet(om)?);
    }
    Ok(ValidationScore { value, missing_classes })
}

/// Fold index of each row; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, rng_seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = vec![0; labels.len()];
    for c in 0..n_classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rows.shuffle(&mut rng);
        for (k, r) in rows.into_iter().enumerate() {
            out[r] = k % folds;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub q: usize,
    /// Mean held-out log-likelihood; `-inf` if any fold failed.
    pub score: f64,
    pub fold_scores: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: PenaltyConfig,
    pub best_score: f64,
    pub table: Vec<ScoreRow>,
}

fn fold_score(
    data: &LabeledData,
    fold_of: &[usize],
    fold: usize,
    method: Method,
    cfg: &PenaltyConfig,
    rng_seed: u64,
) -> Result<f64> {
    let train_rows: Vec<usize> = (0..fold_of.len()).filter(|&i| fold_of[i] != fold).collect();
    let test_rows: Vec<usize> = (0..fold_of.len()).filter(|&i| fold_of[i] == fold).collect();
    let train = data.select(&train_rows);
    let train_stats = ClassDataset::from_labeled(&train)?;
    let fit = method.fit(&train_stats, cfg, rng_seed)?;
    let means: Vec<_> = train_stats.classes.iter().map(|s| s.mean.clone()).collect();
    let holdout = ClassDataset::centered_at(&data.select(&test_rows), &means);
    Ok(validation_loglik(&fit.omegas, &holdout)?.value)
}

/// Scores every grid point by K-fold validation likelihood and returns the best.
///
/// Fit failures score `-inf` and are recorded in the table. Ties keep the
/// first grid point in lexicographic order.
pub fn cv_select(
    data: &LabeledData,
    grid: &TuningGrid,
    method: Method,
    base: &PenaltyConfig,
) -> Result<CvOutcome> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Parameter("tuning grid is empty".into()));
    }
    if grid.folds < 2 {
        return Err(Error::Parameter(format!("need at least 2 folds, got {}", grid.folds)));
    }
    let counts = data.class_counts();
    if let Some(c) = counts.iter().position(|&n| n < grid.folds) {
        return Err(Error::DegenerateClass {
            class: c,
            reason: format!("{} observations for {} folds", counts[c], grid.folds),
        });
    }
    let fold_of = stratified_folds(&data.labels, data.n_classes, grid.folds, grid.rng_seed);
    let config_at = |&(l1, l2, q): &(f64, f64, usize)| {
        let mut cfg = base.clone();
        cfg.lambda1 = l1;
        cfg.lambda2 = l2;
        cfg.q = q;
        cfg
    };

    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|g| (0..grid.folds).map(move |f| (g, f))).collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(g, f)| fold_score(data, &fold_of, f, method, &config_at(&points[g]), grid.rng_seed))
        .collect();

    let mut table = Vec::with_capacity(points.len());
    for (g, &(lambda1, lambda2, q)) in points.iter().enumerate() {
        let fold_results = &results[g * grid.folds..(g + 1) * grid.folds];
        let error = fold_results.iter().find_map(|r| r.as_ref().err().map(|e| e.to_string()));
        let fold_scores: Vec<f64> = fold_results
            .iter()
            .map(|r| *r.as_ref().unwrap_or(&f64::NEG_INFINITY))
            .collect();
        let score = if error.is_some() {
            f64::NEG_INFINITY
        } else {
            fold_scores.iter().sum::<f64>() / grid.folds as f64
        };
        table.push(ScoreRow { lambda1, lambda2, q, score, fold_scores, error });
    }
    let mut best = 0;
    for (g, row) in table.iter().enumerate() {
        if row.score > table[best].score {
            best = g;
        }
    }
    Ok(CvOutcome { best: config_at(&points[best]), best_score: table[best].score, table })
}
