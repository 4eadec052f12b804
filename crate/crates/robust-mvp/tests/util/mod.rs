//! Independent numerical oracles for integration tests.
//!
//! Nothing here calls into the crate's linear algebra: the eigensolver is a
//! cyclic Jacobi rotation scheme and the inverse is Gauss-Jordan with
//! partial pivoting, so agreement with the main path is meaningful.

// Each test target compiles its own copy and uses a subset.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching eigenvector
/// columns.
pub fn jacobi_eigen(matrix: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "square input");
    let mut a = matrix.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _sweep in 0..200 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.norm()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    (values, vectors)
}

/// The crate's eigenvector sign convention, re-stated independently: flip
/// each column so its largest-magnitude entry is positive (ties to the
/// lowest index).
pub fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (i, value) in col.iter().enumerate() {
            if value.abs() > best_abs {
                best_abs = value.abs();
                best = i;
            }
        }
        if best_abs > 0.0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "square input");
    let mut a = matrix.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[(row, col)].abs() > a[(pivot, col)].abs() {
                pivot = row;
            }
        }
        assert!(a[(pivot, col)].abs() > 0.0, "singular matrix");
        if pivot != col {
            a.swap_rows(pivot, col);
            inv.swap_rows(pivot, col);
        }
        let scale = a[(col, col)];
        for k in 0..n {
            a[(col, k)] /= scale;
            inv[(col, k)] /= scale;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[(row, col)];
            if factor == 0.0 {
                continue;
            }
            for k in 0..n {
                let a_col_k = a[(col, k)];
                let inv_col_k = inv[(col, k)];
                a[(row, k)] -= factor * a_col_k;
                inv[(row, k)] -= factor * inv_col_k;
            }
        }
    }
    inv
}

/// Symmetric inverse square root `S^{-1/2}` via the Jacobi eigensolver.
pub fn sym_inv_sqrt(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = jacobi_eigen(matrix);
    let n = matrix.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        assert!(values[k] > 0.0, "matrix must be positive definite");
        let scale = 1.0 / values[k].sqrt();
        let col = vectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += scale * col[i] * col[j];
            }
        }
    }
    out
}

/// A random well-conditioned SPD matrix.
pub fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let mut s = &a * a.transpose() / n as f64;
    for i in 0..n {
        s[(i, i)] += 0.5;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
    s
}

/// Largest absolute entry difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A deterministic random panel of standard-normal returns.
pub fn random_panel(t: usize, p: usize, seed: u64) -> robust_mvp::ReturnPanel {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = DMatrix::from_fn(t, p, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    robust_mvp::ReturnPanel::new(
        values,
        (0..p).map(|i| format!("a{i:03}")).collect(),
        (0..t).map(|i| format!("t{i:05}")).collect(),
    )
    .unwrap()
}

/// A deterministic random panel with a planted two-factor structure.
pub fn factor_panel(t: usize, p: usize, seed: u64) -> robust_mvp::ReturnPanel {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let loadings: Vec<[f64; 2]> = (0..p)
        .map(|_| {
            [
                1.0 + 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                0.5 * rng.sample::<f64, _>(rand_distr::StandardNormal),
            ]
        })
        .collect();
    let mut values = DMatrix::zeros(t, p);
    for row in 0..t {
        let f1: f64 = rng.sample(rand_distr::StandardNormal);
        let f2: f64 = rng.sample(rand_distr::StandardNormal);
        for (col, b) in loadings.iter().enumerate() {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            values[(row, col)] = b[0] * f1 + b[1] * f2 + 0.6 * noise;
        }
    }
    robust_mvp::ReturnPanel::new(
        values,
        (0..p).map(|i| format!("a{i:03}")).collect(),
        (0..t).map(|i| format!("t{i:05}")).collect(),
    )
    .unwrap()
}
