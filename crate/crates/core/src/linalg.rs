use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub(crate) const JITTER_START: f64 = 1e-10;
pub(crate) const JITTER_MAX: f64 = 1e-4;

/// Cholesky factorization of `m + jitter·I`, escalating the jitter by a
/// factor of ten from `JITTER_START·scale` up to `JITTER_MAX·scale`.
pub(crate) fn cholesky_jittered(m: &DMatrix<f64>, scale: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(c) = a.cholesky() {
            return Some((c, jitter));
        }
        rel *= 10.0;
    }
    None
}

/// Returns `F` with `F Fᵀ = m` for a symmetric positive semi-definite `m`.
///
/// Tries a plain Cholesky factorization first and falls back to a clamped
/// symmetric eigendecomposition for rank-deficient input.
pub(crate) fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let sym = (m + m.transpose()) * 0.5;
    if let Some(c) = sym.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-8 * scale {
        return Err(Error::NonPsd { min_eigenvalue: min });
    }
    let mut f = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Gershgorin upper bound on the largest eigenvalue of a symmetric matrix.
pub(crate) fn gershgorin_max(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m[(i, i)] + (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}
