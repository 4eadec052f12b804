//! Dense symmetric linear algebra helpers shared across the crate.
//!
//! Matrices are `nalgebra::DMatrix<f64>` (column-major in memory); all JSON
//! artifacts serialize matrices as nested arrays in row-major reading order.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Errors from dense factorizations.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// The iterative symmetric eigensolver did not converge.
    #[error("symmetric eigensolver failed to converge")]
    EigFailure,

    /// Cholesky factorization failed: the matrix is not positive definite.
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// Operands have incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and eigenvectors as matching columns.
///
/// Ties keep the solver's original ordering (stable sort), which makes the
/// result deterministic for a given input.
pub fn sorted_symmetric_eigen(
    matrix: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), LinalgError> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(LinalgError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    let eig = matrix
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(LinalgError::EigFailure)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Flip each column so that its entry of largest absolute value is positive;
/// ties resolve to the lowest index. Zero columns are left untouched.
///
/// This pins the sign freedom of eigenvectors so results are reproducible
/// across solver backends.
pub fn apply_sign_convention(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if best_abs > 0.0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Replace `m` with `(m + m^T) / 2`, forcing exact symmetry.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Cholesky factorization, mapping failure to [`LinalgError::NotPositiveDefinite`].
pub fn spd_cholesky(matrix: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, LinalgError> {
    Cholesky::new(matrix.clone()).ok_or(LinalgError::NotPositiveDefinite)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(matrix: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let (values, _) = sorted_symmetric_eigen(matrix)?;
    Ok(values[values.len() - 1])
}

/// Relative covariance estimation error `|| S^{-1/2} E S^{-1/2} - I ||_F`
/// for a true covariance `S` (SPD) and an estimate `E` (symmetric).
///
/// Computed without forming the square root: with `M = S^{-1} E`, cyclicity
/// of the trace gives `tr((S^{-1/2} E S^{-1/2} - I)^2) = tr((M - I)^2)`, and
/// `M` comes from one Cholesky solve. Bitwise-identical inputs short-circuit
/// to exactly zero.
pub fn relative_cov_error(
    truth: &DMatrix<f64>,
    estimate: &DMatrix<f64>,
) -> Result<f64, LinalgError> {
    if truth.shape() != estimate.shape() {
        return Err(LinalgError::DimensionMismatch(format!(
            "truth {:?} vs estimate {:?}",
            truth.shape(),
            estimate.shape()
        )));
    }
    if truth == estimate {
        return Ok(0.0);
    }
    let chol = spd_cholesky(truth)?;
    let m = chol.solve(estimate);
    let n = truth.nrows();
    // tr((M - I)^2) = sum_{ij} (M - I)_ij (M - I)_ji
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a = m[(i, j)] - if i == j { 1.0 } else { 0.0 };
            let b = m[(j, i)] - if i == j { 1.0 } else { 0.0 };
            acc += a * b;
        }
    }
    Ok(acc.max(0.0).sqrt())
}

/// Largest absolute entry of `a - b`; both shapes must match.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        worst = worst.max((x - y).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let (vals, vecs) = sorted_symmetric_eigen(&m).unwrap();
        assert_eq!(vals.as_slice(), &[5.0, 3.0, 1.0]);
        // Column 0 must be +/- e2.
        assert!(vecs[(1, 0)].abs() > 0.999);
    }

    #[test]
    fn sign_convention_fixes_largest_entry_positive() {
        let mut m = DMatrix::from_row_slice(3, 2, &[-0.8, 0.6, 0.1, -0.9, 0.2, 0.3]);
        apply_sign_convention(&mut m);
        assert!(m[(0, 0)] > 0.0); // flipped
        assert!(m[(1, 1)] > 0.0); // flipped
    }

    #[test]
    fn relative_cov_error_of_scaled_identity() {
        // E = c * S  =>  error = |c - 1| * sqrt(p)
        let p = 6;
        let mut s = DMatrix::<f64>::identity(p, p);
        for i in 0..p {
            s[(i, i)] = 1.0 + i as f64;
        }
        let c = 1.7;
        let e = &s * c;
        let err = relative_cov_error(&s, &e).unwrap();
        assert!((err - 0.7 * (p as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn relative_cov_error_identical_inputs_is_zero() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert_eq!(relative_cov_error(&s, &s.clone()).unwrap(), 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            spd_cholesky(&m),
            Err(LinalgError::NotPositiveDefinite)
        ));
    }
}
