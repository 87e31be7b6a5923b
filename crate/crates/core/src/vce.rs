//! Cluster-robust (Liang-Zeger) sandwich covariance with the CR1
//! small-sample factor `G/(G-1) * (N-1)/(N-K)`.
//!
//! Scores are `w_i * x_i * e_i` summed within clusters; weights are treated
//! as fixed sampling weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Categorical;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Dense cluster assignment `0..n_clusters`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clusters {
    pub ids: Vec<u32>,
    pub n_clusters: usize,
}

impl Clusters {
    pub fn from_categorical(c: &Categorical) -> Self {
        Clusters {
            ids: c.codes.clone(),
            n_clusters: c.n_levels(),
        }
    }

    /// Every observation its own cluster.
    pub fn singletons(n: usize) -> Self {
        Clusters {
            ids: (0..n as u32).collect(),
            n_clusters: n,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// `G x K` matrix of cluster score sums `sum_{i in g} w_i x_i e_i`.
pub fn cluster_scores(
    x: &Matrix,
    residuals: &[f64],
    weights: Option<&[f64]>,
    clusters: &Clusters,
) -> Matrix {
    let k = x.ncols();
    let mut s = Matrix::zeros(clusters.n_clusters, k);
    for i in 0..x.nrows() {
        let we = weights.map_or(1.0, |w| w[i]) * residuals[i];
        if we == 0.0 {
            continue;
        }
        let g = clusters.ids[i] as usize;
        for j in 0..k {
            s[(g, j)] += x[(i, j)] * we;
        }
    }
    s
}

/// CR1 small-sample factor.
pub fn cr1_factor(n_obs: usize, n_clusters: usize, k: usize) -> Result<f64> {
    if n_clusters < 2 {
        return Err(Error::TooFewClusters(n_clusters));
    }
    if n_obs <= k {
        return Err(Error::InsufficientObservations { n_obs, n_params: k });
    }
    let g = n_clusters as f64;
    let n = n_obs as f64;
    Ok(g / (g - 1.0) * (n - 1.0) / (n - k as f64))
}

/// Sandwich `c * B (S'S) B` where `B` is the bread (inverse Hessian) and
/// `S` the cluster score matrix. `k_dof` is the parameter count used in the
/// small-sample factor.
pub fn cluster_robust_vce(
    x: &Matrix,
    bread: &Matrix,
    residuals: &[f64],
    weights: Option<&[f64]>,
    clusters: &Clusters,
    k_dof: usize,
) -> Result<Matrix> {
    let c = cr1_factor(x.nrows(), clusters.n_clusters, k_dof)?;
    let s = cluster_scores(x, residuals, weights, clusters);
    let meat = s.transpose() * &s;
    let mut v = bread * meat * bread * c;
    symmetrize(&mut v);
    Ok(v)
}

pub(crate) fn symmetrize(v: &mut Matrix) {
    let k = v.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let m = 0.5 * (v[(i, j)] + v[(j, i)]);
            v[(i, j)] = m;
            v[(j, i)] = m;
        }
    }
}

/// Number of distinct clusters actually present.
pub fn count_present(clusters: &Clusters) -> usize {
    let mut seen = vec![false; clusters.n_clusters];
    for &g in &clusters.ids {
        seen[g as usize] = true;
    }
    seen.iter().filter(|&&b| b).count()
}
