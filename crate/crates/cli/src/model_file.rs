//! JSON model persistence.

use std::path::Path;

use clusterfuse::qda::QdaModel;
use clusterfuse::PrecisionSet;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: String,
    pub seed: u64,
    pub converged: bool,
    pub inner_converged: bool,
    pub outer_iterations: usize,
    pub nonconverged_class: Option<usize>,
    pub objective_trace: Vec<f64>,
    pub n_per_class: Vec<usize>,
    pub nonzero_per_class: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub p: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub classes: Vec<String>,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(rename = "Q")]
    pub q: usize,
    pub partition: Vec<usize>,
    pub log_priors: Vec<f64>,
    pub mus: Vec<Vec<f64>>,
    /// Row-major `p x p` arrays.
    pub omegas: Vec<Vec<Vec<f64>>>,
    pub diagnostics: Diagnostics,
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], p: usize) -> CliResult<DMatrix<f64>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(CliError::Parse(format!("model matrix is not {p}x{p}")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn omegas(&self) -> CliResult<PrecisionSet> {
        self.omegas.iter().map(|m| matrix_from_rows(m, self.p)).collect::<CliResult<_>>().map(PrecisionSet)
    }

    pub fn qda(&self) -> CliResult<QdaModel> {
        if self.mus.len() != self.c || self.omegas.len() != self.c || self.classes.len() != self.c {
            return Err(CliError::Parse("model arrays disagree with C".into()));
        }
        let mus = self
            .mus
            .iter()
            .map(|m| {
                if m.len() != self.p {
                    return Err(CliError::Parse(format!("mean vector is not of length {}", self.p)));
                }
                Ok(DVector::from_column_slice(m))
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(QdaModel::new(self.omegas()?, mus, self.log_priors.clone())?)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let model: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(CliError::Parse(format!(
                "unsupported model schema version {}",
                model.schema_version
            )));
        }
        Ok(model)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("serializing model: {e}")))?;
        text.push('\n');
        write_file(path, &text)
    }
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Grid file `{"lambda1": [...], "lambda2": [...], "q": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub q: Vec<usize>,
}

impl GridFile {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let grid: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        if grid.lambda1.is_empty() || grid.lambda2.is_empty() || grid.q.is_empty() {
            return Err(CliError::Parameter("grid lists must be nonempty".into()));
        }
        Ok(grid)
    }
}
