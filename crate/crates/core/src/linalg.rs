//! Small dense linear-algebra helpers shared by the solvers.
//!
//! Matrices here are at most a few hundred rows on a side (ridge normal
//! equations, NNLS active sets) except for the PSD probe, which runs on a
//! full similarity matrix.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: ArrayView1<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Lower-triangular Cholesky factor, or `None` if `a` is not positive definite.
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower factor `L`.
pub fn cholesky_solve(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves a symmetric positive-definite system.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(a).ok_or_else(|| {
        Error::InvalidInput("system matrix is not positive definite".into())
    })?;
    Ok(cholesky_solve(l.view(), b))
}

/// Largest eigenvalue of a symmetric matrix by power iteration.
///
/// The start vector is all-ones, which overlaps the Perron vector of any
/// entrywise-nonnegative matrix.
pub fn largest_eigenvalue(a: ArrayView2<f64>, iters: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = a.dot(&v);
        let norm = norm_sq(w.view()).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = dot(v.view(), w.view());
        v = w / norm;
    }
    lambda.max(dot(v.view(), a.dot(&v).view()))
}

/// Checks `λ_min(a) ≥ −rel_tol · λ_max(a)` with a shifted Cholesky factorization.
///
/// `a + ε I` is positive definite exactly when every eigenvalue exceeds `−ε`,
/// so this avoids a full eigendecomposition.
pub fn is_psd(a: ArrayView2<f64>, rel_tol: f64) -> bool {
    let n = a.nrows();
    let lambda_max = largest_eigenvalue(a, 100).abs();
    let shift = rel_tol * lambda_max.max(f64::MIN_POSITIVE);
    let mut shifted = a.to_owned();
    for i in 0..n {
        shifted[[i, i]] += shift;
    }
    cholesky(shifted.view()).is_some()
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Option<f64> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return None;
    }
    let mx = x.sum() / n as f64;
    let my = y.sum() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y.iter()) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
