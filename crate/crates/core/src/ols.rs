//! Weighted least squares with absorbed fixed effects.
//!
//! Regressors are demeaned within fixed-effect levels, screened for
//! collinearity in listed order, and solved by QR. Covariance is the CR1
//! cluster-robust sandwich; without a cluster column every observation is
//! its own cluster (heteroskedasticity-robust).

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::absorb::{AbsorbOptions, Absorber};
use crate::data::{Dataset, ModelSpec, INTERCEPT};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::vce::{self, Clusters};

/// Relative tolerance for dropping a column that is linearly dependent on
/// earlier columns.
pub const RANK_TOL: f64 = 1e-10;
/// With absorbed fixed effects, demeaning is iterative and leaves residue
/// of order the absorption tolerance, so dependence is judged more loosely.
pub const RANK_TOL_ABSORBED: f64 = 1e-6;

/// Shared per-sample state: weights, clusters and the fixed-effect absorber.
#[derive(Debug, Clone)]
pub(crate) struct Frame {
    pub n: usize,
    pub weights: Option<Vec<f64>>,
    pub clusters: Clusters,
    pub absorber: Absorber,
    pub fe_dof: usize,
    pub fe_dof_vce: usize,
    pub fe_nested: bool,
}

impl Frame {
    pub fn new(data: &Dataset, spec: &ModelSpec, opts: AbsorbOptions) -> Result<Frame> {
        spec.validate(data)?;
        let n = data.n_rows();
        let weights = spec
            .weights
            .as_deref()
            .map(|w| data.numeric(w).map(|v| v.to_vec()))
            .transpose()?;
        let clusters = match &spec.cluster {
            Some(c) => Clusters::from_categorical(&data.codes(c)?),
            None => Clusters::singletons(n),
        };
        let cats = spec
            .fixed_effects
            .iter()
            .map(|f| data.codes(f))
            .collect::<Result<Vec<_>>>()?;
        let absorber = Absorber::new(&cats, weights.as_deref(), opts)?;
        let nested = absorber.nested_in(&clusters.ids);
        let dofs = absorber.dof_per_dim();
        let fe_dof = dofs.iter().sum();
        let fe_dof_vce = dofs
            .iter()
            .zip(&nested)
            .filter(|(_, &nest)| !nest)
            .map(|(d, _)| *d)
            .sum();
        Ok(Frame {
            n,
            weights,
            clusters,
            absorber,
            fe_dof,
            fe_dof_vce,
            fe_nested: nested.iter().all(|&b| b),
        })
    }

    pub fn w(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn rank_tol(&self) -> f64 {
        if self.absorber.is_empty() {
            RANK_TOL
        } else {
            RANK_TOL_ABSORBED
        }
    }

    /// Raw values of a named column, with the intercept pseudo-column.
    pub fn raw(&self, data: &Dataset, name: &str) -> Result<Vec<f64>> {
        if name == INTERCEPT {
            Ok(vec![1.0; self.n])
        } else {
            Ok(data.finite(name)?.to_vec())
        }
    }

    pub fn absorb(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.absorber.demeaned(x)
    }

    /// Keep, in order, the columns that are not collinear with earlier
    /// ones or with the fixed effects.
    pub fn screen(&self, raw: &[Vec<f64>], absorbed: &[Vec<f64>]) -> Vec<usize> {
        let norms: Vec<f64> = raw.iter().map(|c| linalg::weighted_norm(c, self.w())).collect();
        let cols: Vec<&[f64]> = absorbed.iter().map(|c| c.as_slice()).collect();
        linalg::select_independent(&cols, &norms, self.w(), self.rank_tol())
    }
}

/// Exogenous regressor names including the intercept when one applies.
pub(crate) fn exog_names(spec: &ModelSpec) -> Vec<String> {
    let mut names = Vec::new();
    if spec.has_intercept() {
        names.push(INTERCEPT.to_owned());
    }
    names.extend(spec.exog.iter().cloned());
    names
}

/// Output of a least-squares or 2SLS fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Residuals `y - X b` (fixed effects at their estimates).
    pub residuals: Vec<f64>,
    /// Cluster-robust covariance, ordered like `names`.
    pub vce: Matrix,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub dof_residual: usize,
    pub dropped_collinear: Vec<String>,
    /// Absorbed regressors entering the scores (projected ones for 2SLS).
    pub(crate) score_design: Matrix,
    pub(crate) bread: Matrix,
    pub(crate) weights: Option<Vec<f64>>,
    pub(crate) k_vce: usize,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coefficients[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| libm::sqrt(self.vce[(i, i)].max(0.0)))
    }

    pub fn t_stat(&self, name: &str) -> Option<f64> {
        Some(self.coef(name)? / self.se(name)?)
    }

    /// Two-sided p value for a zero coefficient (χ²(1) on the squared t).
    pub fn p_value(&self, name: &str) -> Option<f64> {
        let t = self.t_stat(name)?;
        Some(crate::dist::chi2_sf(t * t, 1.0))
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Parameter count used in the CR1 factor (retained regressors plus
    /// fixed-effect dimensions not nested within clusters).
    pub fn k_vce(&self) -> usize {
        self.k_vce
    }
}

/// Weighted least squares of `spec.outcome` on `spec.exog` (plus intercept
/// when no fixed effects) with the fixed effects absorbed.
pub fn wls_fit(data: &Dataset, spec: &ModelSpec) -> Result<FitResult> {
    wls_fit_with(data, spec, AbsorbOptions::default())
}

pub fn wls_fit_with(data: &Dataset, spec: &ModelSpec, opts: AbsorbOptions) -> Result<FitResult> {
    if !spec.endog.is_empty() {
        return Err(Error::InvalidSpec(
            "wls_fit takes no endogenous regressors; use tsls_fit".into(),
        ));
    }
    let frame = Frame::new(data, spec, opts)?;
    let candidates = exog_names(spec);
    let raw = candidates
        .iter()
        .map(|c| frame.raw(data, c))
        .collect::<Result<Vec<_>>>()?;
    let absorbed = raw.iter().map(|c| frame.absorb(c)).collect::<Result<Vec<_>>>()?;
    let y = frame.absorb(data.finite(&spec.outcome)?)?;
    fit_absorbed(&frame, &candidates, &raw, &absorbed, &y)
}

pub(crate) fn fit_absorbed(
    frame: &Frame,
    candidates: &[String],
    raw: &[Vec<f64>],
    absorbed: &[Vec<f64>],
    y: &[f64],
) -> Result<FitResult> {
    let kept = frame.screen(raw, absorbed);
    if kept.is_empty() {
        return Err(Error::NoRetainedColumns);
    }
    let dropped = (0..candidates.len())
        .filter(|j| !kept.contains(j))
        .map(|j| candidates[j].clone())
        .collect();
    let names: Vec<String> = kept.iter().map(|&j| candidates[j].clone()).collect();
    let cols: Vec<&[f64]> = kept.iter().map(|&j| absorbed[j].as_slice()).collect();
    let x = linalg::from_columns(frame.n, &cols);
    let k = names.len();
    if frame.n < k + frame.fe_dof {
        return Err(Error::InsufficientObservations {
            n_obs: frame.n,
            n_params: k + frame.fe_dof,
        });
    }
    let (beta, bread) = linalg::wls_solve(&x, y, frame.w())?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let k_vce = k + frame.fe_dof_vce;
    let vce = vce::cluster_robust_vce(&x, &bread, &residuals, frame.w(), &frame.clusters, k_vce)?;
    Ok(FitResult {
        names,
        coefficients: beta.iter().copied().collect(),
        residuals,
        vce,
        n_obs: frame.n,
        n_clusters: vce::count_present(&frame.clusters),
        dof_residual: frame.n.saturating_sub(k + frame.fe_dof),
        dropped_collinear: dropped,
        score_design: x,
        bread,
        weights: frame.weights.clone(),
        k_vce,
    })
}

/// Recompute the cluster-robust covariance of `fit` under a different
/// clustering of the same rows.
pub fn cluster_robust_vce(
    fit: &FitResult,
    data: &Dataset,
    cluster: &str,
    weights: Option<&str>,
) -> Result<Matrix> {
    if data.n_rows() != fit.n_obs {
        return Err(Error::LengthMismatch {
            name: "dataset".into(),
            expected: fit.n_obs,
            found: data.n_rows(),
        });
    }
    let w = weights.map(|w| data.numeric(w)).transpose()?;
    if w.is_some() != fit.weights.is_some() {
        return Err(Error::InvalidArgument(
            "weights must match those used for the fit".into(),
        ));
    }
    let clusters = Clusters::from_categorical(&data.codes(cluster)?);
    vce::cluster_robust_vce(
        &fit.score_design,
        &fit.bread,
        &fit.residuals,
        fit.weights.as_deref(),
        &clusters,
        fit.k_vce,
    )
}
