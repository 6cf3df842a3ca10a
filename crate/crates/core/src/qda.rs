//! Quadratic discriminant analysis on estimated precision matrices.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ClassDataset, PrecisionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priors {
    /// Class frequencies `n_c / n`.
    Empirical,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdaModel {
    pub omegas: PrecisionSet,
    pub mus: Vec<DVector<f64>>,
    /// Normalized so that the priors sum to one.
    pub log_priors: Vec<f64>,
    #[serde(skip)]
    logdets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl QdaModel {
    /// Builds a model; `log_priors` may be unnormalized and are shifted to sum to one.
    pub fn new(omegas: PrecisionSet, mus: Vec<DVector<f64>>, log_priors: Vec<f64>) -> Result<Self> {
        let c = omegas.len();
        if c == 0 || mus.len() != c || log_priors.len() != c {
            return Err(Error::Shape(format!(
                "{c} precision matrices, {} means, {} priors",
                mus.len(),
                log_priors.len()
            )));
        }
        let p = omegas.dim();
        if mus.iter().any(|m| m.len() != p) {
            return Err(Error::Shape(format!("means must have length {p}")));
        }
        if log_priors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("log priors must be finite".into()));
        }
        let logdets = omegas.iter().map(linalg::logdet).collect::<Result<Vec<_>>>()?;
        let norm = log_sum_exp(&log_priors);
        let log_priors = log_priors.iter().map(|v| v - norm).collect();
        Ok(Self { omegas, mus, log_priors, logdets })
    }

    /// Model from estimated precisions and the class means and sizes of `data`.
    pub fn from_estimates(omegas: PrecisionSet, data: &ClassDataset, priors: Priors) -> Result<Self> {
        let mus = data.classes.iter().map(|s| s.mean.clone()).collect();
        let log_priors = match priors {
            Priors::Empirical => data.classes.iter().map(|s| (s.n as f64).ln()).collect(),
            Priors::Uniform => vec![0.0; data.n_classes()],
        };
        Self::new(omegas, mus, log_priors)
    }

    /// Recomputes cached log-determinants, e.g. after deserialization.
    pub fn refresh(self) -> Result<Self> {
        Self::new(self.omegas, self.mus, self.log_priors)
    }

    pub fn n_classes(&self) -> usize {
        self.omegas.len()
    }

    pub fn dim(&self) -> usize {
        self.omegas.dim()
    }

    /// `log π_c + ½ logdet Ω_c - ½ (x-μ_c)ᵀ Ω_c (x-μ_c)` for every class.
    pub fn scores(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "observation has {} features, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        if self.logdets.len() != self.n_classes() {
            return Err(Error::Parameter("model cache not initialized; call refresh()".into()));
        }
        Ok((0..self.n_classes())
            .map(|c| {
                let d = x - &self.mus[c];
                let quad = (self.omegas[c].clone() * &d).dot(&d);
                self.log_priors[c] + 0.5 * self.logdets[c] - 0.5 * quad
            })
            .collect())
    }

    /// Highest-scoring class; ties go to the lowest class index.
    pub fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        let scores = self.scores(x)?;
        let mut label = 0;
        for (c, s) in scores.iter().enumerate() {
            if *s > scores[label] {
                label = c;
            }
        }
        Ok(Prediction { label, scores })
    }

    /// Predicted labels of the rows of `x`.
    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict(&x.row(i).transpose()).map(|p| p.label))
            .collect()
    }
}

/// Fraction of rows whose predicted class differs from `labels`.
pub fn classification_error(model: &QdaModel, x: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    if x.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::Parameter("no test rows".into()));
    }
    let pred = model.predict_rows(x)?;
    let wrong = pred.iter().zip(labels).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / labels.len() as f64)
}
