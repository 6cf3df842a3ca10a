//! Dense symmetric matrix helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Columns are orthonormal eigenvectors, ordered like `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Rebuilds `V diag(f(d)) V^T`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> DMatrix<f64> {
        let p = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..p {
            let w = f(self.values[j]);
            scaled.column_mut(j).scale_mut(w);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in eigendecomposition input".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let p = a.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    sym_eigen(a).map(|e| e.values)
}

/// Cholesky factor of a symmetric matrix, or `None` when it is not positive definite.
pub fn cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = Cholesky::new(symmetrize(a))?;
    // nalgebra accepts tiny positive pivots that overflow on inversion
    if chol.l_dirty().diagonal().iter().any(|d| *d <= 0.0 || !d.is_finite()) {
        return None;
    }
    Some(chol)
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    cholesky(a).is_some()
}

pub fn logdet_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn logdet(a: &DMatrix<f64>) -> Result<f64> {
    cholesky(a)
        .map(|c| logdet_from_cholesky(&c))
        .ok_or_else(|| Error::Domain("logdet of a matrix that is not positive definite".into()))
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cholesky(a)
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| Error::Domain("inverse of a matrix that is not positive definite".into()))
}

/// `tr(A B)` for symmetric `B`, without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum()
}

pub fn frobenius_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn frobenius_dist_sq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Elementwise absolute sum over all entries, diagonal included.
pub fn l1_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// Largest absolute entry, used as a relative scale for symmetry checks.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    a.is_square() && asymmetry(a) <= rel_tol * max_abs(a).max(f64::MIN_POSITIVE)
}
