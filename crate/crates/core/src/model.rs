//! Data model, penalized objectives and estimation metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default threshold under which an estimated entry counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Labeled observations: one row per observation, labels are class indices `0..C`.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub x: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabeledData {
    pub fn new(x: DMatrix<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Parameter(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self { x, labels, n_classes })
    }

    /// Stacks per-class sample matrices, labelling block `c` as class `c`.
    pub fn from_class_blocks(blocks: &[DMatrix<f64>]) -> Result<Self> {
        let p = blocks.first().map(|b| b.ncols()).unwrap_or(0);
        if blocks.iter().any(|b| b.ncols() != p) {
            return Err(Error::Shape("class blocks have different widths".into()));
        }
        let n: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut x = DMatrix::zeros(n, p);
        let mut labels = Vec::with_capacity(n);
        let mut row = 0;
        for (c, b) in blocks.iter().enumerate() {
            x.rows_mut(row, b.nrows()).copy_from(b);
            labels.extend(std::iter::repeat_n(c, b.nrows()));
            row += b.nrows();
        }
        Self::new(x, labels, blocks.len())
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Subset of rows, keeping the class count.
    pub fn select(&self, rows: &[usize]) -> Self {
        let p = self.dim();
        let mut x = DMatrix::zeros(rows.len(), p);
        for (dst, &src) in rows.iter().enumerate() {
            x.set_row(dst, &self.x.row(src));
        }
        Self {
            x,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_means(&self) -> Vec<DVector<f64>> {
        let p = self.dim();
        let mut sums = vec![DVector::zeros(p); self.n_classes];
        let counts = self.class_counts();
        for (i, &l) in self.labels.iter().enumerate() {
            sums[l] += self.x.row(i).transpose();
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, n)| if n > 0 { s / n as f64 } else { s })
            .collect()
    }
}

/// Sufficient statistics of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub n: usize,
    pub mean: DVector<f64>,
    /// Covariance with the 1/n normalization.
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDataset {
    pub classes: Vec<ClassStats>,
}

impl ClassDataset {
    /// Validates the per-class statistics.
    pub fn new(classes: Vec<ClassStats>) -> Result<Self> {
        let data = Self { classes };
        data.validate()?;
        Ok(data)
    }

    pub fn from_labeled(data: &LabeledData) -> Result<Self> {
        let means = data.class_means();
        let stats = Self::centered_at(data, &means);
        Self::new(stats.classes)
    }

    /// Class statistics with covariances centered at externally supplied means.
    ///
    /// Classes absent from `data` get `n = 0` and a zero covariance; the result
    /// is not validated, since held-out folds may legitimately miss a class.
    pub fn centered_at(data: &LabeledData, means: &[DVector<f64>]) -> Self {
        let p = data.dim();
        let counts = data.class_counts();
        let mut covs = vec![DMatrix::zeros(p, p); data.n_classes];
        for (i, &l) in data.labels.iter().enumerate() {
            let d = data.x.row(i).transpose() - &means[l];
            covs[l].ger(1.0, &d, &d, 1.0);
        }
        let classes = covs
            .into_iter()
            .zip(counts)
            .zip(means.iter())
            .map(|((cov, n), mean)| ClassStats {
                n,
                mean: mean.clone(),
                cov: if n > 0 { linalg::symmetrize(&(cov / n as f64)) } else { cov },
            })
            .collect();
        Self { classes }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map(|c| c.cov.nrows()).unwrap_or(0)
    }

    pub fn total_n(&self) -> usize {
        self.classes.iter().map(|c| c.n).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Parameter("dataset has no classes".into()));
        }
        let p = self.dim();
        if p == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        for (c, s) in self.classes.iter().enumerate() {
            if s.n == 0 {
                return Err(Error::DegenerateClass { class: c, reason: "no observations".into() });
            }
            if s.cov.nrows() != p || s.cov.ncols() != p || s.mean.len() != p {
                return Err(Error::Shape(format!("class {c} statistics are not {p}-dimensional")));
            }
            if !linalg::is_symmetric(&s.cov, 1e-12) {
                return Err(Error::Domain(format!("covariance of class {c} is not symmetric")));
            }
            let eig = linalg::eigenvalues(&s.cov)?;
            let top = eig[p - 1].abs();
            if eig[0] < -1e-10 * top.max(f64::MIN_POSITIVE) {
                return Err(Error::Domain(format!(
                    "covariance of class {c} is not positive semidefinite"
                )));
            }
        }
        Ok(())
    }
}

/// The class precision matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSet(pub Vec<DMatrix<f64>>);

impl PrecisionSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0.first().map(|m| m.nrows()).unwrap_or(0)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DMatrix<f64>> {
        self.0.iter()
    }

    /// Checks symmetry and strict positive definiteness of every member.
    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        for (c, m) in self.0.iter().enumerate() {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::Shape(format!("precision {c} is not {p}x{p}")));
            }
            if !linalg::is_symmetric(m, 1e-12) {
                return Err(Error::Domain(format!("precision {c} is not symmetric")));
            }
            if linalg::eigenvalues(m)?[0] <= 0.0 {
                return Err(Error::Domain(format!("precision {c} is not positive definite")));
            }
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for PrecisionSet {
    type Output = DMatrix<f64>;

    fn index(&self, c: usize) -> &DMatrix<f64> {
        &self.0[c]
    }
}

/// Assignment of the C classes to Q nonempty clusters (labels `0..Q`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    q: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::Parameter("partition needs at least one block".into()));
        }
        let mut sizes = vec![0usize; q];
        for &l in &labels {
            if l >= q {
                return Err(Error::Parameter(format!("cluster label {l} out of range 0..{q}")));
            }
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Parameter(format!("cluster {empty} is empty")));
        }
        Ok(Self { labels, q })
    }

    /// Single block containing every class.
    pub fn single(c: usize) -> Self {
        Self { labels: vec![0; c], q: 1 }
    }

    pub fn singletons(c: usize) -> Self {
        Self { labels: (0..c).collect(), q: c }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_blocks(&self) -> usize {
        self.q
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, c: usize) -> usize {
        self.labels[c]
    }

    /// Member classes of each block, in ascending class order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.q];
        for (c, &l) in self.labels.iter().enumerate() {
            blocks[l].push(c);
        }
        blocks
    }

    pub fn block_size(&self, c: usize) -> usize {
        let l = self.labels[c];
        self.labels.iter().filter(|&&m| m == l).count()
    }

    /// Relabels blocks in order of first appearance.
    pub fn canonical(&self) -> Self {
        let mut map = vec![usize::MAX; self.q];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Self { labels, q: self.q }
    }

    /// Equality up to a permutation of block labels.
    pub fn equivalent(&self, other: &Self) -> bool {
        self.q == other.q && self.canonical().labels == other.canonical().labels
    }
}

/// Tuning parameters and solver controls for CRF and PCEN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub q: usize,
    /// Relative objective change that ends an inner blockwise sweep.
    pub tol: f64,
    /// Maximum number of outer (partition) rounds.
    pub max_iter: usize,
    /// Maximum number of blockwise sweeps per inner solve.
    pub inner_max_iter: usize,
    pub n_starts: usize,
}

impl PenaltyConfig {
    pub fn new(lambda1: f64, lambda2: f64, q: usize) -> Self {
        Self {
            lambda1,
            lambda2,
            q,
            tol: 1e-7,
            max_iter: 25,
            inner_max_iter: 500,
            n_starts: 100,
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return Err(Error::Parameter(format!("lambda1 must be positive, got {}", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda2 must be nonnegative, got {}",
                self.lambda2
            )));
        }
        if self.q == 0 || self.q > n_classes {
            return Err(Error::Parameter(format!(
                "Q must lie in 1..={n_classes}, got {}",
                self.q
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 || self.inner_max_iter == 0 || self.n_starts == 0
        {
            return Err(Error::Parameter("tolerances and iteration limits must be positive".into()));
        }
        Ok(())
    }
}

fn check_conformable(data: &ClassDataset, omegas: &PrecisionSet) -> Result<()> {
    if data.n_classes() != omegas.len() {
        return Err(Error::Shape(format!(
            "{} classes but {} precision matrices",
            data.n_classes(),
            omegas.len()
        )));
    }
    let p = data.dim();
    if omegas.iter().any(|m| m.nrows() != p || m.ncols() != p) {
        return Err(Error::Shape(format!("precision matrices must be {p}x{p}")));
    }
    Ok(())
}

/// `n (tr(S Ω) - logdet Ω)` for one class.
pub fn class_neg2_loglik(n: usize, cov: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<f64> {
    Ok(n as f64 * (linalg::trace_product(cov, omega) - linalg::logdet(omega)?))
}

/// Profiled negative two times the Gaussian log-likelihood.
pub fn neg2_loglik(data: &ClassDataset, omegas: &PrecisionSet) -> Result<f64> {
    check_conformable(data, omegas)?;
    data.classes
        .iter()
        .zip(omegas.iter())
        .map(|(s, om)| class_neg2_loglik(s.n, &s.cov, om))
        .sum()
}

/// Cluster fusion penalty with each unordered pair counted once:
/// `(λ2/2) Σ_q card(D_q)^-1 Σ_{c<m in D_q} ||Ω_c - Ω_m||_F^2`.
pub fn fusion_penalty(omegas: &PrecisionSet, part: &Partition, lambda2: f64) -> Result<f64> {
    if part.n_classes() != omegas.len() {
        return Err(Error::Shape(format!(
            "partition covers {} classes, got {} matrices",
            part.n_classes(),
            omegas.len()
        )));
    }
    if lambda2 == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for block in part.blocks() {
        let mut pairs = 0.0;
        for (i, &c) in block.iter().enumerate() {
            for &m in &block[i + 1..] {
                pairs += linalg::frobenius_dist_sq(&omegas[c], &omegas[m]);
            }
        }
        total += pairs / block.len() as f64;
    }
    Ok(0.5 * lambda2 * total)
}

/// CRF objective: likelihood + (λ1/2) Σ ||Ω_c||_F^2 + fusion.
pub fn crf_objective(
    data: &ClassDataset,
    omegas: &PrecisionSet,
    part: &Partition,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    let ridge: f64 = omegas.iter().map(linalg::frobenius_sq).sum();
    Ok(neg2_loglik(data, omegas)?
        + 0.5 * cfg.lambda1 * ridge
        + fusion_penalty(omegas, part, cfg.lambda2)?)
}

/// PCEN objective: likelihood + λ1 Σ ||Ω_c||_1 (diagonal included) + fusion.
pub fn pcen_objective(
    data: &ClassDataset,
    omegas: &PrecisionSet,
    part: &Partition,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    let l1: f64 = omegas.iter().map(linalg::l1_norm).sum();
    Ok(neg2_loglik(data, omegas)? + cfg.lambda1 * l1 + fusion_penalty(omegas, part, cfg.lambda2)?)
}

fn check_same_shapes(truth: &PrecisionSet, est: &PrecisionSet) -> Result<()> {
    if truth.len() != est.len()
        || truth.iter().zip(est.iter()).any(|(a, b)| a.shape() != b.shape())
    {
        return Err(Error::Shape("truth and estimate differ in shape".into()));
    }
    Ok(())
}

/// Sum of true positives: entries (diagonal included) nonzero in both truth and estimate.
pub fn metric_stp(truth: &PrecisionSet, est: &PrecisionSet, zero_tol: f64) -> Result<usize> {
    check_same_shapes(truth, est)?;
    Ok(truth
        .iter()
        .zip(est.iter())
        .map(|(t, e)| {
            t.iter()
                .zip(e.iter())
                .filter(|(a, b)| a.abs() > zero_tol && b.abs() > zero_tol)
                .count()
        })
        .sum())
}

/// Number of entries above `zero_tol` across all matrices.
pub fn count_nonzero(set: &PrecisionSet, zero_tol: f64) -> usize {
    set.iter().map(|m| m.iter().filter(|v| v.abs() > zero_tol).count()).sum()
}

/// Sum over classes of squared Frobenius estimation error.
pub fn metric_frob_error(truth: &PrecisionSet, est: &PrecisionSet) -> Result<f64> {
    check_same_shapes(truth, est)?;
    Ok(truth.iter().zip(est.iter()).map(|(t, e)| linalg::frobenius_dist_sq(t, e)).sum())
}
