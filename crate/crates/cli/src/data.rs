//! Labeled CSV input.

use std::path::Path;

use clusterfuse::LabeledData;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// Which column holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelCol {
    Last,
    Index(usize),
}

impl std::str::FromStr for LabelCol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "last" {
            return Ok(LabelCol::Last);
        }
        s.parse()
            .map(LabelCol::Index)
            .map_err(|_| format!("expected 'last' or a 0-based column index, got '{s}'"))
    }
}

impl LabelCol {
    fn resolve(self, ncols: usize) -> CliResult<usize> {
        match self {
            LabelCol::Last => Ok(ncols - 1),
            LabelCol::Index(i) if i < ncols => Ok(i),
            LabelCol::Index(i) => {
                Err(CliError::Parameter(format!("label column {i} but rows have {ncols} columns")))
            }
        }
    }
}

/// Raw rows of a CSV file: cells as trimmed strings.
pub struct Table {
    pub rows: Vec<Vec<String>>,
    pub ncols: usize,
}

pub fn read_table(path: &Path, header: bool) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_owned).collect::<Vec<_>>());
        if rows[i].is_empty() || rows[i].iter().all(|c| c.is_empty()) {
            rows.pop();
        }
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols < 2 {
        return Err(CliError::Parse(format!("{}: need rows with a label and at least one feature", path.display())));
    }
    Ok(Table { rows, ncols })
}

fn parse_cell(cell: &str, row: usize, col: usize) -> CliResult<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Parse(format!("row {row}, column {col}: '{cell}' is not a finite number"))),
    }
}

/// Feature matrix from the non-label columns.
pub fn features(table: &Table, skip: Option<usize>) -> CliResult<DMatrix<f64>> {
    let p = table.ncols - usize::from(skip.is_some());
    let mut x = DMatrix::zeros(table.rows.len(), p);
    for (i, row) in table.rows.iter().enumerate() {
        let mut j = 0;
        for (col, cell) in row.iter().enumerate() {
            if Some(col) == skip {
                continue;
            }
            x[(i, j)] = parse_cell(cell, i + 1, col)?;
            j += 1;
        }
    }
    Ok(x)
}

/// Sorted class names: numerically when every label is an integer.
pub fn class_names(labels: &[String]) -> Vec<String> {
    let mut names: Vec<String> = labels.to_vec();
    if names.iter().all(|l| l.parse::<i64>().is_ok()) {
        names.sort_by_key(|l| l.parse::<i64>().unwrap_or_default());
    } else {
        names.sort();
    }
    names.dedup();
    names
}

pub fn label_indices(labels: &[String], names: &[String]) -> CliResult<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            names
                .iter()
                .position(|n| n == l)
                .ok_or_else(|| CliError::Parse(format!("label '{l}' is not a known class")))
        })
        .collect()
}

/// Labeled observations plus the class name of each index.
pub struct Labeled {
    pub data: LabeledData,
    pub names: Vec<String>,
}

pub fn read_labeled(path: &Path, header: bool, label_col: LabelCol) -> CliResult<Labeled> {
    let table = read_table(path, header)?;
    if table.rows.iter().any(|r| r.len() != table.ncols) {
        return Err(CliError::Parse(format!("{}: rows differ in length", path.display())));
    }
    let col = label_col.resolve(table.ncols)?;
    let labels: Vec<String> = table.rows.iter().map(|r| r[col].clone()).collect();
    let names = class_names(&labels);
    let idx = label_indices(&labels, &names)?;
    let x = features(&table, Some(col))?;
    let data = LabeledData::new(x, idx, names.len())?;
    Ok(Labeled { data, names })
}

/// Rows to classify; labels are read when the row has one more column than `p`.
pub struct Observations {
    pub x: DMatrix<f64>,
    pub labels: Option<Vec<String>>,
}

pub fn read_observations(
    path: &Path,
    header: bool,
    label_col: LabelCol,
    p: usize,
) -> CliResult<Observations> {
    let table = read_table(path, header)?;
    if table.rows.iter().any(|r| r.len() != table.ncols) {
        return Err(CliError::Parse(format!("{}: rows differ in length", path.display())));
    }
    if table.ncols == p {
        return Ok(Observations { x: features(&table, None)?, labels: None });
    }
    if table.ncols != p + 1 {
        return Err(CliError::Dimension(format!(
            "model has {p} features but {} has {} columns",
            path.display(),
            table.ncols
        )));
    }
    let col = label_col.resolve(table.ncols)?;
    let labels = table.rows.iter().map(|r| r[col].clone()).collect();
    Ok(Observations { x: features(&table, Some(col))?, labels: Some(labels) })
}
