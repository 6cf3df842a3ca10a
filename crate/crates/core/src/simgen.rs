//! Data-generating mechanisms for the simulation studies.
//!
//! Sparse precision matrices are built from Erdős–Rényi adjacency matrices:
//! edge weights are drawn from `(-0.7,-0.5) ∪ (0.5,0.7)` ([`build_e`]) or
//! perturbed from a base matrix ([`build_r`]), then normalized to be strictly
//! diagonally dominant and rescaled so every variable has unit variance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Partition, PrecisionSet};

/// Half-open interval of perturbations; `lo == hi` means the constant `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const PERTURB: Interval = Interval { lo: -0.01, hi: 0.01 };

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

/// Symmetric 0/1 adjacency with exactly `n_edges` edges drawn uniformly without replacement.
pub fn erdos_renyi_adjacency<R: Rng + ?Sized>(
    p: usize,
    n_edges: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let pairs: Vec<(usize, usize)> =
        (0..p).flat_map(|j| ((j + 1)..p).map(move |k| (j, k))).collect();
    if n_edges > pairs.len() {
        return Err(Error::Parameter(format!(
            "{n_edges} edges requested but a {p}-node graph has only {}",
            pairs.len()
        )));
    }
    let mut adj = DMatrix::zeros(p, p);
    let mut picked = index::sample(rng, pairs.len(), n_edges).into_vec();
    picked.sort_unstable();
    for i in picked {
        let (j, k) = pairs[i];
        adj[(j, k)] = 1.0;
        adj[(k, j)] = 1.0;
    }
    Ok(adj)
}

/// Upper-triangular edge list of an adjacency or support pattern.
pub fn edges(adj: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let p = adj.nrows();
    (0..p)
        .flat_map(|j| ((j + 1)..p).map(move |k| (j, k)))
        .filter(|&(j, k)| adj[(j, k)] != 0.0)
        .collect()
}

/// Copy of `adj` with `k` of its edges removed uniformly at random.
pub fn remove_edges<R: Rng + ?Sized>(
    adj: &DMatrix<f64>,
    k: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let list = edges(adj);
    if k > list.len() {
        return Err(Error::Parameter(format!(
            "cannot remove {k} edges from a graph with {}",
            list.len()
        )));
    }
    let mut out = adj.clone();
    let mut picked = index::sample(rng, list.len(), k).into_vec();
    picked.sort_unstable();
    for i in picked {
        let (a, b) = list[i];
        out[(a, b)] = 0.0;
        out[(b, a)] = 0.0;
    }
    Ok(out)
}

/// Scales a precision matrix so that its inverse has unit diagonal.
pub fn unit_variance(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sigma = linalg::spd_inverse(omega)?;
    let d = sigma.diagonal().map(f64::sqrt);
    let mut out = omega.clone();
    for j in 0..out.nrows() {
        for k in 0..out.ncols() {
            out[(j, k)] *= d[j] * d[k];
        }
    }
    Ok(linalg::symmetrize(&out))
}

/// Divides off-diagonal weights by 1.5 times the larger absolute row sum of
/// the two rows they sit in, sets a unit diagonal, then rescales to unit
/// variances. Every row's off-diagonal mass ends below 2/3, so the result is
/// strictly diagonally dominant.
fn normalize(weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = weights.nrows();
    let row_sums: Vec<f64> = (0..p)
        .map(|j| (0..p).filter(|&k| k != j).map(|k| weights[(j, k)].abs()).sum())
        .collect();
    let mut out = DMatrix::identity(p, p);
    for j in 0..p {
        for k in 0..p {
            if j != k && weights[(j, k)] != 0.0 {
                out[(j, k)] = weights[(j, k)] / (1.5 * row_sums[j].max(row_sums[k]));
            }
        }
    }
    unit_variance(&out)
}

fn check_adjacency(adj: &DMatrix<f64>) -> Result<()> {
    if !adj.is_square() || linalg::asymmetry(adj) != 0.0 {
        return Err(Error::Shape("adjacency must be square and symmetric".into()));
    }
    Ok(())
}

/// Random sparse precision matrix on the support of `adj`.
pub fn build_e<R: Rng + ?Sized>(adj: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    check_adjacency(adj)?;
    let p = adj.nrows();
    let mut w = DMatrix::zeros(p, p);
    for (j, k) in edges(adj) {
        let magnitude = rng.random_range(0.5..0.7);
        let v = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        w[(j, k)] = v;
        w[(k, j)] = v;
    }
    normalize(&w)
}

/// Precision matrix on the support of `adj` whose weights perturb those of `base`.
pub fn build_r<R: Rng + ?Sized>(
    adj: &DMatrix<f64>,
    base: &DMatrix<f64>,
    perturb: Interval,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    check_adjacency(adj)?;
    if base.shape() != adj.shape() {
        return Err(Error::Shape("base and adjacency differ in size".into()));
    }
    let p = adj.nrows();
    let mut w = DMatrix::zeros(p, p);
    for (j, k) in edges(adj) {
        let v = base[(j, k)] + perturb.draw(rng);
        w[(j, k)] = v;
        w[(k, j)] = v;
    }
    normalize(&w)
}

/// `n` rows drawn i.i.d. from `N(mu, omega^-1)`.
pub fn mvn_sample<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    omega: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = mu.len();
    if omega.shape() != (p, p) {
        return Err(Error::Shape(format!("precision must be {p}x{p}")));
    }
    let chol = linalg::cholesky(omega)
        .ok_or_else(|| Error::Domain("sampling precision is not positive definite".into()))?;
    if n == 0 {
        return Ok(DMatrix::zeros(0, p));
    }
    let mut z = DMatrix::zeros(p, n);
    for i in 0..n {
        for j in 0..p {
            z[(j, i)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    // Ω = L Lᵀ, so x = L^-ᵀ z has covariance Ω^-1
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    let mut rows = x.transpose();
    for mut row in rows.row_iter_mut() {
        row += mu.transpose();
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Two clusters of block Erdős–Rényi graphs, the second pair on a random split of the variables.
    BlockEr,
    /// Two clusters of block-diagonal Erdős–Rényi graphs sharing the block structure.
    BlockdiagEr,
    /// Block diagonal with an Erdős–Rényi first block and an identity second block.
    BlockdiagIdentity,
    /// Dense clustered covariances with class means, for discriminant analysis.
    QdaDense,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BlockEr => "block_er",
            Self::BlockdiagEr => "blockdiag_er",
            Self::BlockdiagIdentity => "blockdiag_identity",
            Self::QdaDense => "qda_dense",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block_er" => Ok(Self::BlockEr),
            "blockdiag_er" => Ok(Self::BlockdiagEr),
            "blockdiag_identity" => Ok(Self::BlockdiagIdentity),
            "qda_dense" => Ok(Self::QdaDense),
            other => Err(Error::Parameter(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub p: usize,
    pub n_per_class: usize,
    /// Off-diagonal correlation of the fourth class (dense scenario only).
    pub rho: f64,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, p: usize, n_per_class: usize, rng_seed: u64) -> Self {
        Self { kind, p, n_per_class, rho: 0.45, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ScenarioKind::QdaDense => {
                if self.p < 2 || self.p > 100 {
                    return Err(Error::Parameter(format!(
                        "dense scenario needs 2 <= p <= 100, got {}",
                        self.p
                    )));
                }
                if !(self.rho > -1.0 && self.rho < 1.0) {
                    return Err(Error::Parameter(format!("rho must lie in (-1, 1), got {}", self.rho)));
                }
            }
            _ => {
                if self.p % 2 != 0 {
                    return Err(Error::Parameter(format!(
                        "block scenarios need an even p, got {}",
                        self.p
                    )));
                }
                if self.p < 8 {
                    return Err(Error::Parameter(format!(
                        "block scenarios need p >= 8 to remove four edges per block, got {}",
                        self.p
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub omegas: PrecisionSet,
    pub mus: Vec<DVector<f64>>,
    pub partition: Partition,
}

fn block_diag(blocks: &[(&[usize], &DMatrix<f64>)], p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p, p);
    for (idx, b) in blocks {
        for (a, &j) in idx.iter().enumerate() {
            for (c, &k) in idx.iter().enumerate() {
                out[(j, k)] = b[(a, c)];
            }
        }
    }
    out
}

/// Pair of block-diagonal matrices whose second member swaps and thins the
/// blocks of the first: `(diag(U, L), diag(R(A1 - k1, L), R(A2 - k2, U)))`.
fn swapped_pair<R: Rng + ?Sized>(
    h: usize,
    second_removed: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a1 = erdos_renyi_adjacency(h, h, rng)?;
    let a2 = erdos_renyi_adjacency(h, h, rng)?;
    let u = build_e(&a1, rng)?;
    let l = build_e(&a2, rng)?;
    let a3 = remove_edges(&a1, 4, rng)?;
    let a4 = remove_edges(&a2, second_removed, rng)?;
    let upper = build_r(&a3, &l, Interval::PERTURB, rng)?;
    let lower = build_r(&a4, &u, Interval::PERTURB, rng)?;
    let first: Vec<usize> = (0..h).collect();
    let second: Vec<usize> = (h..2 * h).collect();
    Ok((
        block_diag(&[(&first, &u), (&second, &l)], 2 * h),
        block_diag(&[(&first, &upper), (&second, &lower)], 2 * h),
    ))
}

fn identity_pair<R: Rng + ?Sized>(h: usize, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a1 = erdos_renyi_adjacency(h, h, rng)?;
    let u = build_e(&a1, rng)?;
    let lower = DMatrix::identity(h, h);
    let a3 = remove_edges(&a1, 4, rng)?;
    let upper = build_r(&a3, &lower, Interval::PERTURB, rng)?;
    let first: Vec<usize> = (0..h).collect();
    let second: Vec<usize> = (h..2 * h).collect();
    Ok((
        block_diag(&[(&first, &u), (&second, &lower)], 2 * h),
        block_diag(&[(&first, &upper), (&second, &lower)], 2 * h),
    ))
}

/// Second cluster of the block scenario: blocks on a random split of the variables.
fn split_pair<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let h = p / 2;
    let mut s1 = index::sample(rng, p, h).into_vec();
    s1.sort_unstable();
    let s2: Vec<usize> = (0..p).filter(|j| !s1.contains(j)).collect();
    let a5 = erdos_renyi_adjacency(h, h, rng)?;
    let a6 = erdos_renyi_adjacency(h, h, rng)?;
    let g = build_e(&a5, rng)?;
    let hm = build_e(&a6, rng)?;
    let a7 = remove_edges(&a5, 4, rng)?;
    let a8 = remove_edges(&a6, 4, rng)?;
    let g4 = build_r(&a7, &g, Interval::PERTURB, rng)?;
    let h4 = build_r(&a8, &hm, Interval::PERTURB, rng)?;
    Ok((block_diag(&[(&s1, &g), (&s2, &hm)], p), block_diag(&[(&s1, &g4), (&s2, &h4)], p)))
}

/// Linearly spaced eigenvalues from `a` down to `b`.
pub fn linear_spectrum(a: f64, b: f64, p: usize) -> DVector<f64> {
    if p == 1 {
        return DVector::from_element(1, a);
    }
    DVector::from_fn(p, |j, _| a - j as f64 * (a - b) / (p as f64 - 1.0))
}

fn tridiagonal(p: usize, off: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |j, k| {
        if j == k {
            1.0
        } else if j.abs_diff(k) == 1 {
            off
        } else {
            0.0
        }
    })
}

fn dense_truth<R: Rng + ?Sized>(p: usize, rho: f64, rng: &mut R) -> Result<GroundTruth> {
    let z = DMatrix::from_fn(100, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let svd = z.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not return singular vectors".into()))?;
    // columns of v are the right singular vectors
    let v = v_t.transpose();
    let sigma = |h: DVector<f64>| linalg::symmetrize(&(v.transpose() * DMatrix::from_diagonal(&h) * &v));
    let sigmas = [
        sigma(linear_spectrum(1000.0, 100.0, p)),
        sigma(linear_spectrum(999.0, 99.0, p)),
        tridiagonal(p, 0.45),
        tridiagonal(p, rho),
    ];
    let omegas = sigmas
        .iter()
        .map(|s| {
            linalg::spd_inverse(s).map_err(|_| {
                Error::Parameter(format!("covariance with rho = {rho} is not positive definite"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = (p as f64).ln() / p as f64;
    let mus = [20.0, -10.0, 10.0, -20.0]
        .iter()
        .map(|m| DVector::from_element(p, m * scale))
        .collect();
    Ok(GroundTruth {
        omegas: PrecisionSet(omegas),
        mus,
        partition: Partition::new(vec![0, 0, 1, 1], 2)?,
    })
}

/// Builds the four true precision matrices and means of a scenario.
pub fn make_truth<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Result<GroundTruth> {
    s.validate()?;
    let p = s.p;
    let h = p / 2;
    let (o1, o2, o3, o4) = match s.kind {
        ScenarioKind::QdaDense => return dense_truth(p, s.rho, rng),
        ScenarioKind::BlockEr => {
            let (o1, o2) = swapped_pair(h, 4, rng)?;
            let (o3, o4) = split_pair(p, rng)?;
            (o1, o2, o3, o4)
        }
        ScenarioKind::BlockdiagEr => {
            let thinned = (0.2 * h as f64).round() as usize;
            let (o1, o2) = swapped_pair(h, thinned, rng)?;
            let (o3, o4) = swapped_pair(h, thinned, rng)?;
            (o1, o2, o3, o4)
        }
        ScenarioKind::BlockdiagIdentity => {
            let (o1, o2) = identity_pair(h, rng)?;
            let (o3, o4) = identity_pair(h, rng)?;
            (o1, o2, o3, o4)
        }
    };
    Ok(GroundTruth {
        omegas: PrecisionSet(vec![o1, o2, o3, o4]),
        mus: vec![DVector::zeros(p); 4],
        partition: Partition::new(vec![0, 0, 1, 1], 2)?,
    })
}

/// Draws `n` observations per class from the ground truth.
pub fn sample_classes<R: Rng + ?Sized>(
    truth: &GroundTruth,
    n: usize,
    rng: &mut R,
) -> Result<Vec<DMatrix<f64>>> {
    truth.mus.iter().zip(truth.omegas.iter()).map(|(mu, om)| mvn_sample(mu, om, n, rng)).collect()
}

/// Ground truth plus `n_per_class` training rows per class, all from `s.rng_seed`.
pub fn make_scenario(s: &Scenario) -> Result<(GroundTruth, Vec<DMatrix<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.rng_seed);
    let truth = make_truth(s, &mut rng)?;
    let data = sample_classes(&truth, s.n_per_class, &mut rng)?;
    Ok((truth, data))
}

/// Number of upper-triangular positions whose zero/nonzero status differs.
pub fn support_difference(a: &DMatrix<f64>, b: &DMatrix<f64>, zero_tol: f64) -> usize {
    let p = a.nrows();
    (0..p)
        .flat_map(|j| ((j + 1)..p).map(move |k| (j, k)))
        .filter(|&(j, k)| (a[(j, k)].abs() > zero_tol) != (b[(j, k)].abs() > zero_tol))
        .count()
}
