//! Dense helpers on top of nalgebra: ordered rank screening and weighted
//! least-squares solves.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub(crate) fn wdot(a: &[f64], b: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum(),
        None => a.iter().zip(b).map(|(x, y)| x * y).sum(),
    }
}

/// Screen columns in listed order, keeping a column only when its weighted
/// norm after projection on the columns already kept exceeds `rel_tol`
/// times `reference_norms[j]` (modified Gram-Schmidt). Returns kept indices.
pub fn select_independent(
    cols: &[&[f64]],
    reference_norms: &[f64],
    w: Option<&[f64]>,
    rel_tol: f64,
) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        let mut r = col.to_vec();
        for q in &basis {
            let c = wdot(q, &r, w);
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= c * qi;
            }
        }
        let norm = libm::sqrt(wdot(&r, &r, w));
        if reference_norms[j] > 0.0 && norm > rel_tol * reference_norms[j] {
            for v in &mut r {
                *v /= norm;
            }
            basis.push(r);
            kept.push(j);
        }
    }
    kept
}

pub fn weighted_norm(x: &[f64], w: Option<&[f64]>) -> f64 {
    libm::sqrt(wdot(x, x, w))
}

/// Columns into an `n x k` matrix.
pub fn from_columns(n: usize, cols: &[&[f64]]) -> Matrix {
    Matrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// Solution of the weighted least-squares problem and the inverse of
/// `X' W X`, via QR of `sqrt(W) X`.
pub fn wls_solve(x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Result<(Vector, Matrix)> {
    let n = x.nrows();
    let k = x.ncols();
    if n < k {
        return Err(Error::InsufficientObservations { n_obs: n, n_params: k });
    }
    let mut xs = x.clone();
    let mut ys = Vector::from_column_slice(y);
    if let Some(w) = w {
        for i in 0..n {
            let s = libm::sqrt(w[i]);
            for j in 0..k {
                xs[(i, j)] *= s;
            }
            ys[i] *= s;
        }
    }
    let qr = xs.qr();
    let r = qr.r();
    let qty = qr.q().transpose() * ys;
    let rinv = r
        .solve_upper_triangular(&Matrix::identity(k, k))
        .ok_or(Error::Singular("X'WX"))?;
    let beta = &rinv * qty;
    let bread = &rinv * rinv.transpose();
    Ok((beta, bread))
}

/// Inverse of a symmetric positive-definite matrix, rejecting numerically
/// singular input.
pub fn spd_inverse(m: &Matrix, what: &'static str) -> Result<Matrix> {
    let scale = (0..m.nrows()).fold(0.0f64, |s, i| s.max(libm::fabs(m[(i, i)])));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Singular(what));
    }
    let chol = m.clone().cholesky().ok_or(Error::Singular(what))?;
    let l = chol.l();
    let min_pivot = (0..l.nrows()).fold(f64::INFINITY, |s, i| s.min(l[(i, i)] * l[(i, i)]));
    if min_pivot <= 1e-13 * scale {
        return Err(Error::Singular(what));
    }
    Ok(chol.inverse())
}
