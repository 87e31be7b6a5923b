//! Wald tests of linear restrictions `R b = r` using a fit's cluster-robust
//! covariance.

use alloc::borrow::ToOwned;
use alloc::vec::Vec;

use crate::dist;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::ols::FitResult;

/// Reference distribution for the p value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WaldReference {
    /// `χ²(q)` on the statistic.
    #[default]
    ChiSquare,
    /// `F(q, G-1)` on statistic / q.
    F,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldResult {
    pub statistic: f64,
    pub p: f64,
    pub restrictions: usize,
}

/// `(Rb - r)' (R V R')^{-1} (Rb - r)` for explicit `R` and `r`.
pub fn wald_test(
    fit: &FitResult,
    r: &Matrix,
    values: &[f64],
    reference: WaldReference,
) -> Result<WaldResult> {
    let k = fit.coefficients.len();
    if r.ncols() != k || r.nrows() != values.len() || r.nrows() == 0 || r.nrows() > k {
        return Err(Error::InvalidArgument(
            "restriction matrix must be q x k with 1 <= q <= k".into(),
        ));
    }
    let b = Vector::from_column_slice(&fit.coefficients);
    let diff = r * b - Vector::from_column_slice(values);
    let middle = r * &fit.vce * r.transpose();
    let statistic = quadratic_form(&middle, &diff)?;
    let q = r.nrows();
    Ok(WaldResult {
        statistic,
        p: p_value(statistic, q, fit.n_clusters, reference),
        restrictions: q,
    })
}

pub(crate) fn quadratic_form(middle: &Matrix, diff: &Vector) -> Result<f64> {
    if diff.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let inv = linalg::spd_inverse(middle, "R V R'")?;
    Ok((diff.transpose() * inv * diff)[(0, 0)])
}

pub(crate) fn p_value(statistic: f64, q: usize, n_clusters: usize, reference: WaldReference) -> f64 {
    match reference {
        WaldReference::ChiSquare => dist::chi2_sf(statistic, q as f64),
        WaldReference::F => dist::f_sf(
            statistic / q as f64,
            q as f64,
            n_clusters.saturating_sub(1).max(1) as f64,
        ),
    }
}

/// Joint test that the named coefficients are all zero.
pub fn wald_zero(fit: &FitResult, names: &[&str], reference: WaldReference) -> Result<WaldResult> {
    let rows: Vec<Vec<(&str, f64)>> = names.iter().map(|n| alloc::vec![(*n, 1.0)]).collect();
    wald_linear(fit, &rows, &alloc::vec![0.0; names.len()], reference)
}

/// Test of restrictions expressed as rows of `(name, weight)` pairs.
pub fn wald_linear(
    fit: &FitResult,
    rows: &[Vec<(&str, f64)>],
    values: &[f64],
    reference: WaldReference,
) -> Result<WaldResult> {
    let k = fit.coefficients.len();
    let mut r = Matrix::zeros(rows.len(), k);
    for (i, row) in rows.iter().enumerate() {
        for (name, w) in row {
            let j = fit
                .index(name)
                .ok_or_else(|| Error::MissingColumn((*name).to_owned()))?;
            r[(i, j)] += w;
        }
    }
    wald_test(fit, &r, values, reference)
}
