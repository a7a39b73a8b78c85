//! Thin wrappers over the dense symmetric routines in faer.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

#[derive(Debug, Clone, thiserror::Error)]
pub enum DenseError {
    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>, DenseError> {
    let mut values = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| DenseError::EigenFailure)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors as columns.
pub fn sym_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>), DenseError> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| DenseError::EigenFailure)?;
    let n = m.nrows();
    let s = e.S();
    let u = e.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = order.iter().map(|&k| s[k]).collect();
    let vectors = Mat::from_fn(n, n, |i, c| u[(i, order[c])]);
    Ok((values, vectors))
}

/// Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    n: usize,
}

impl Cholesky {
    pub fn new(m: &Mat<f64>) -> Result<Self, DenseError> {
        let llt = m
            .llt(Side::Lower)
            .map_err(|_| DenseError::NotPositiveDefinite)?;
        Ok(Cholesky { llt, n: m.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        self.llt.solve_in_place(b.as_mut());
        (0..self.n).map(|i| b[(i, 0)]).collect()
    }

    pub fn inverse(&self) -> Mat<f64> {
        let mut b = Mat::<f64>::identity(self.n, self.n);
        self.llt.solve_in_place(b.as_mut());
        b
    }
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { -1.0 });
        let (vals, vecs) = sym_eigen(&m).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        assert!(vals[0].abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12 && (vals[2] - 3.0).abs() < 1e-12);
        let recon = Mat::from_fn(3, 3, |i, j| (0..3).map(|k| vecs[(i, k)] * vals[k] * vecs[(j, k)]).sum());
        assert!(max_abs_diff(&recon, &m) < 1e-12);
    }

    #[test]
    fn cholesky_solves() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 1.0 });
        let c = Cholesky::new(&m).unwrap();
        let x = c.solve(&[3.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        let bad = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(Cholesky::new(&bad).is_err());
    }
}
