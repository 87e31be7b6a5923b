//! Two-stage least squares with first-stage strength and overidentification
//! diagnostics.
//!
//! All variables are demeaned against the fixed effects first. The
//! instrument set is the retained exogenous regressors followed by the
//! retained excluded instruments. With one endogenous regressor the
//! Kleibergen-Paap F reduces to the cluster-robust first-stage Wald
//! statistic on the excluded instruments divided by their number. Hansen's
//! J is the two-step efficient GMM criterion with the moment covariance
//! aggregated by cluster from 2SLS residuals.

use alloc::string::String;
use alloc::vec::Vec;

use crate::absorb::AbsorbOptions;
use crate::data::{Dataset, ModelSpec};
use crate::dist;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::ols::{self, exog_names, FitResult, Frame};
use crate::vce::{self, Clusters};
use crate::wald::{self, WaldReference};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HansenJ {
    pub statistic: f64,
    pub p: f64,
    pub dof: usize,
}

/// 2SLS fit plus diagnostics.
#[derive(Debug, Clone)]
pub struct IvFitResult {
    /// Second stage; coefficient order is endogenous then exogenous.
    pub fit: FitResult,
    pub first_stage: Vec<FitResult>,
    pub endog: Vec<String>,
    /// Retained excluded instruments.
    pub instruments: Vec<String>,
    /// First-stage F on excluded instruments; `None` with several
    /// endogenous regressors.
    pub kp_f: Option<f64>,
    /// Present iff the model is overidentified.
    pub hansen_j: Option<HansenJ>,
    z: Matrix,
    x: Matrix,
    y: Vec<f64>,
    clusters: Clusters,
}

impl IvFitResult {
    pub fn is_overidentified(&self) -> bool {
        self.instruments.len() > self.endog.len()
    }
}

pub fn tsls_fit(data: &Dataset, spec: &ModelSpec) -> Result<IvFitResult> {
    tsls_fit_with(data, spec, AbsorbOptions::default())
}

pub fn tsls_fit_with(data: &Dataset, spec: &ModelSpec, opts: AbsorbOptions) -> Result<IvFitResult> {
    if spec.endog.is_empty() {
        return Err(Error::InvalidSpec("tsls_fit needs an endogenous regressor".into()));
    }
    let frame = Frame::new(data, spec, opts)?;
    let exog = exog_names(spec);
    let zc: Vec<String> = exog.iter().chain(&spec.instruments).cloned().collect();
    let z_raw = zc.iter().map(|c| frame.raw(data, c)).collect::<Result<Vec<_>>>()?;
    let z_abs = z_raw.iter().map(|c| frame.absorb(c)).collect::<Result<Vec<_>>>()?;
    let kept = frame.screen(&z_raw, &z_abs);
    let n_exog = exog.len();
    let kept_exog: Vec<usize> = kept.iter().copied().filter(|&j| j < n_exog).collect();
    let kept_inst: Vec<usize> = kept.iter().copied().filter(|&j| j >= n_exog).collect();
    if kept_inst.len() < spec.endog.len() {
        return Err(Error::InvalidSpec(alloc::format!(
            "order condition fails: {} usable instrument(s) for {} endogenous regressor(s)",
            kept_inst.len(),
            spec.endog.len()
        )));
    }
    let mut dropped: Vec<String> = (0..zc.len())
        .filter(|j| !kept.contains(j))
        .map(|j| zc[j].clone())
        .collect();

    let x_raw_en = spec
        .endog
        .iter()
        .map(|c| frame.raw(data, c))
        .collect::<Result<Vec<_>>>()?;
    let x_abs_en = x_raw_en.iter().map(|c| frame.absorb(c)).collect::<Result<Vec<_>>>()?;
    let y = frame.absorb(data.finite(&spec.outcome)?)?;

    let mut names: Vec<String> = spec.endog.clone();
    names.extend(kept_exog.iter().map(|&j| zc[j].clone()));
    let mut x_cols: Vec<&[f64]> = x_abs_en.iter().map(|c| c.as_slice()).collect();
    x_cols.extend(kept_exog.iter().map(|&j| z_abs[j].as_slice()));
    let x = linalg::from_columns(frame.n, &x_cols);
    let z_cols: Vec<&[f64]> = kept.iter().map(|&j| z_abs[j].as_slice()).collect();
    let z = linalg::from_columns(frame.n, &z_cols);

    let w = frame.w();
    let xhat = project(&z, &x, w)?;
    // Rank of the projected design.
    let xhat_cols: Vec<Vec<f64>> = (0..xhat.ncols()).map(|j| xhat.column(j).iter().copied().collect()).collect();
    let xhat_refs: Vec<&[f64]> = xhat_cols.iter().map(|c| c.as_slice()).collect();
    let ref_norms: Vec<f64> = x_cols.iter().map(|c| linalg::weighted_norm(c, w)).collect();
    if linalg::select_independent(&xhat_refs, &ref_norms, w, frame.rank_tol()).len() != xhat.ncols() {
        return Err(Error::Singular("projected 2SLS design is rank deficient"));
    }
    let k = names.len();
    if frame.n < k + frame.fe_dof {
        return Err(Error::InsufficientObservations { n_obs: frame.n, n_params: k + frame.fe_dof });
    }
    let (beta, bread) = linalg::wls_solve(&xhat, &y, w)?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let k_vce = k + frame.fe_dof_vce;
    let vce_m = vce::cluster_robust_vce(&xhat, &bread, &residuals, w, &frame.clusters, k_vce)?;

    // First stages share the instrument matrix.
    let first_names: Vec<String> = kept.iter().map(|&j| zc[j].clone()).collect();
    let first_raw: Vec<Vec<f64>> = kept.iter().map(|&j| z_raw[j].clone()).collect();
    let first_abs: Vec<Vec<f64>> = kept.iter().map(|&j| z_abs[j].clone()).collect();
    let mut first_stage = Vec::with_capacity(spec.endog.len());
    for xe in &x_abs_en {
        first_stage.push(ols::fit_absorbed(&frame, &first_names, &first_raw, &first_abs, xe)?);
    }
    let instruments: Vec<String> = kept_inst.iter().map(|&j| zc[j].clone()).collect();

    let fit = FitResult {
        names,
        coefficients: beta.iter().copied().collect(),
        residuals,
        vce: vce_m,
        n_obs: frame.n,
        n_clusters: vce::count_present(&frame.clusters),
        dof_residual: frame.n.saturating_sub(k + frame.fe_dof),
        dropped_collinear: core::mem::take(&mut dropped),
        score_design: xhat,
        bread,
        weights: frame.weights.clone(),
        k_vce,
    };
    let mut out = IvFitResult {
        fit,
        first_stage,
        endog: spec.endog.clone(),
        instruments,
        kp_f: None,
        hansen_j: None,
        z,
        x,
        y,
        clusters: frame.clusters.clone(),
    };
    if out.endog.len() == 1 {
        out.kp_f = Some(kp_f(&out)?);
    }
    if out.is_overidentified() {
        out.hansen_j = Some(hansen_j(&out)?);
    }
    Ok(out)
}

/// Weighted projection of the columns of `x` on the span of `z`.
fn project(z: &Matrix, x: &Matrix, w: Option<&[f64]>) -> Result<Matrix> {
    let mut out = Matrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let (pi, _) = linalg::wls_solve(z, &col, w)?;
        out.set_column(j, &(z * pi));
    }
    Ok(out)
}

/// First-stage cluster-robust F on the excluded instruments.
pub fn kp_f(iv: &IvFitResult) -> Result<f64> {
    if iv.endog.len() != 1 {
        return Err(Error::Unsupported("first-stage F with several endogenous regressors"));
    }
    let first = &iv.first_stage[0];
    let names: Vec<&str> = iv.instruments.iter().map(|s| s.as_str()).collect();
    let w = wald::wald_zero(first, &names, WaldReference::ChiSquare)?;
    Ok(w.statistic / names.len() as f64)
}

/// Hansen J from two-step efficient GMM.
pub fn hansen_j(iv: &IvFitResult) -> Result<HansenJ> {
    if !iv.is_overidentified() {
        return Err(Error::NotOveridentified);
    }
    let w = iv.fit.weights.as_deref();
    let s = moment_covariance(&iv.z, &iv.fit.residuals, w, &iv.clusters);
    let s_inv = linalg::spd_inverse(&s, "moment covariance")?;
    let zwx = weighted_cross(&iv.z, &iv.x, w);
    let zwy = weighted_cross_vec(&iv.z, &iv.y, w);
    let a = zwx.transpose() * &s_inv * &zwx;
    let a_inv = linalg::spd_inverse(&a, "GMM normal matrix")?;
    let beta2 = a_inv * (zwx.transpose() * &s_inv * &zwy);
    let g = zwy - zwx * beta2;
    let statistic = (g.transpose() * s_inv * &g)[(0, 0)];
    let dof = iv.instruments.len() - iv.endog.len();
    Ok(HansenJ {
        statistic,
        p: dist::chi2_sf(statistic, dof as f64),
        dof,
    })
}

/// `sum_g (Z_g' W_g e_g)(Z_g' W_g e_g)'`.
pub(crate) fn moment_covariance(z: &Matrix, e: &[f64], w: Option<&[f64]>, clusters: &Clusters) -> Matrix {
    let scores = vce::cluster_scores(z, e, w, clusters);
    scores.transpose() * scores
}

pub(crate) fn weighted_cross(a: &Matrix, b: &Matrix, w: Option<&[f64]>) -> Matrix {
    match w {
        Some(w) => {
            let mut bw = b.clone();
            for i in 0..bw.nrows() {
                for j in 0..bw.ncols() {
                    bw[(i, j)] *= w[i];
                }
            }
            a.transpose() * bw
        }
        None => a.transpose() * b,
    }
}

pub(crate) fn weighted_cross_vec(a: &Matrix, y: &[f64], w: Option<&[f64]>) -> Vector {
    let yw = Vector::from_iterator(y.len(), y.iter().enumerate().map(|(i, v)| w.map_or(1.0, |w| w[i]) * v));
    a.transpose() * yw
}
