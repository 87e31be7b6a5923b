//! Changes-in-changes on a 2x2 group-by-period layout.
//!
//! The counterfactual for a treated-pre outcome `y` is
//! `Q_{control,post}(F_{control,pre}(y))`, with `F` the right-continuous
//! weighted ECDF and `Q` its left-continuous inverse. The effect at
//! percentile `q` is the treated-post quantile minus the counterfactual
//! quantile.
//!
//! Bootstrap replications reweight observations by their resampling
//! multiplicity: whole clusters when cluster ids are attached, otherwise
//! observations within each cell.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::ols;
use crate::rng;
use crate::weakiv::at_least;

/// Tolerance on the cumulative-weight comparison in quantile lookups.
const CUM_TOL: f64 = 1e-12;

/// One cell's outcomes with optional weights and cluster ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub clusters: Option<Vec<u32>>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Self {
        Sample { values, weights: None, clusters: None }
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Self {
        Sample { values, weights: Some(weights), clusters: None }
    }

    pub fn with_clusters(mut self, clusters: Vec<u32>) -> Self {
        self.clusters = Some(clusters);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::EmptySample(what));
        }
        let n = self.values.len();
        for (name, len) in [
            ("weights", self.weights.as_ref().map(|w| w.len())),
            ("clusters", self.clusters.as_ref().map(|c| c.len())),
        ] {
            if let Some(len) = len {
                if len != n {
                    return Err(Error::LengthMismatch { name: name.into(), expected: n, found: len });
                }
            }
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { name: what.into(), row: i });
        }
        if let Some(w) = &self.weights {
            if let Some(i) = w.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::InvalidWeight { row: i });
            }
        }
        Ok(())
    }

    pub fn ecdf(&self) -> Ecdf {
        Ecdf::new(&self.values, |i| self.weight(i))
    }

    /// Copy with weights multiplied by `mult`, dropping zero-multiplicity
    /// observations.
    fn reweighted(&self, mult: &[f64]) -> Sample {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| mult[i] > 0.0).collect();
        Sample {
            values: keep.iter().map(|&i| self.values[i]).collect(),
            weights: Some(keep.iter().map(|&i| self.weight(i) * mult[i]).collect()),
            clusters: self.clusters.as_ref().map(|c| keep.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// Weighted empirical distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
    cum: Vec<f64>,
    total: f64,
}

impl Ecdf {
    fn new(values: &[f64], weight: impl Fn(usize) -> f64) -> Self {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut sorted = Vec::with_capacity(values.len());
        let mut cum = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for &i in &idx {
            acc += weight(i);
            sorted.push(values[i]);
            cum.push(acc);
        }
        Ecdf { sorted, cum, total: acc }
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// `P(Y <= y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        let k = self.sorted.partition_point(|&v| v <= y);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1] / self.total
        }
    }

    /// `inf { y : F(y) >= q }`, with `Q(q) = min` for `q <= 0`.
    pub fn quantile(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return self.min();
        }
        let target = q * self.total * (1.0 - CUM_TOL);
        let k = self.cum.partition_point(|&c| c < target);
        self.sorted[k.min(self.sorted.len() - 1)]
    }
}

/// The four cells of the 2x2 layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CellData {
    pub control_pre: Sample,
    pub control_post: Sample,
    pub treated_pre: Sample,
    pub treated_post: Sample,
}

impl CellData {
    pub fn new(control_pre: Sample, control_post: Sample, treated_pre: Sample, treated_post: Sample) -> Result<Self> {
        let c = CellData { control_pre, control_post, treated_pre, treated_post };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.control_pre.validate("control-pre")?;
        self.control_post.validate("control-post")?;
        self.treated_pre.validate("treated-pre")?;
        self.treated_post.validate("treated-post")?;
        let with_ids = self.cells().iter().filter(|s| s.clusters.is_some()).count();
        if with_ids != 0 && with_ids != 4 {
            return Err(Error::InvalidArgument("cluster ids must be given for all four cells or none".into()));
        }
        Ok(())
    }

    fn cells(&self) -> [&Sample; 4] {
        [&self.control_pre, &self.control_post, &self.treated_pre, &self.treated_post]
    }

    pub fn has_clusters(&self) -> bool {
        self.control_pre.clusters.is_some()
    }

    /// Apply `f` to every outcome.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CellData {
        let m = |s: &Sample| Sample { values: s.values.iter().map(|&v| f(v)).collect(), ..s.clone() };
        CellData {
            control_pre: m(&self.control_pre),
            control_post: m(&self.control_post),
            treated_pre: m(&self.treated_pre),
            treated_post: m(&self.treated_post),
        }
    }
}

/// What to do with a treated-pre outcome outside the control-pre support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupportPolicy {
    #[default]
    Error,
    Clip,
}

/// Precomputed control distributions for repeated counterfactual lookups.
#[derive(Debug, Clone)]
pub struct Transport {
    pre: Ecdf,
    post: Ecdf,
    policy: SupportPolicy,
}

impl Transport {
    pub fn new(control_pre: &Sample, control_post: &Sample, policy: SupportPolicy) -> Result<Self> {
        control_pre.validate("control-pre")?;
        control_post.validate("control-post")?;
        Ok(Transport { pre: control_pre.ecdf(), post: control_post.ecdf(), policy })
    }

    pub fn apply(&self, y: f64) -> Result<f64> {
        let (lo, hi) = (self.pre.min(), self.pre.max());
        let slack = 1e-12 * libm::fabs(lo).max(libm::fabs(hi)).max(1.0);
        let y = if y < lo || y > hi {
            if self.policy == SupportPolicy::Error && (y < lo - slack || y > hi + slack) {
                return Err(Error::SupportViolation { value: y, lower: lo, upper: hi });
            }
            y.clamp(lo, hi)
        } else {
            y
        };
        Ok(self.post.quantile(self.pre.cdf(y)))
    }
}

/// Counterfactual untreated post-period outcome for a treated-pre outcome.
pub fn cic_counterfactual(y: f64, cells: &CellData, policy: SupportPolicy) -> Result<f64> {
    Transport::new(&cells.control_pre, &cells.control_post, policy)?.apply(y)
}

/// Counterfactual treated-post sample: transported treated-pre outcomes
/// with their weights.
pub fn counterfactual_sample(cells: &CellData, policy: SupportPolicy) -> Result<Sample> {
    let t = Transport::new(&cells.control_pre, &cells.control_post, policy)?;
    let values = cells.treated_pre.values.iter().map(|&y| t.apply(y)).collect::<Result<Vec<_>>>()?;
    Ok(Sample { values, ..cells.treated_pre.clone() })
}

/// Effects at percentiles, with optional bootstrap intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileEffectCurve {
    pub percentiles: Vec<f64>,
    pub effects: Vec<f64>,
    pub ci_lower: Option<Vec<f64>>,
    pub ci_upper: Option<Vec<f64>>,
    pub replications: u64,
    pub seed: Option<u64>,
}

/// 0.05, 0.10, ..., 0.95.
pub fn default_percentiles() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

pub fn check_percentiles(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("no percentiles".into()));
    }
    if p.iter().any(|&q| !(q > 0.0 && q < 1.0)) || p.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("percentiles must be strictly ascending within (0, 1)".into()));
    }
    Ok(())
}

fn effects_raw(cells: &CellData, percentiles: &[f64], policy: SupportPolicy) -> Result<Vec<f64>> {
    let cf = counterfactual_sample(cells, policy)?.ecdf();
    let tp = cells.treated_post.ecdf();
    Ok(percentiles.iter().map(|&q| tp.quantile(q) - cf.quantile(q)).collect())
}

pub fn cic_effects(cells: &CellData, percentiles: &[f64], policy: SupportPolicy) -> Result<QuantileEffectCurve> {
    check_percentiles(percentiles)?;
    cells.validate()?;
    Ok(QuantileEffectCurve {
        percentiles: percentiles.to_vec(),
        effects: effects_raw(cells, percentiles, policy)?,
        ci_lower: None,
        ci_upper: None,
        replications: 0,
        seed: None,
    })
}

/// Column roles for building cells from a dataset. `group` and `period`
/// are 0/1 indicators (1 = treated, 1 = post).
#[derive(Debug, Clone, PartialEq)]
pub struct CellLabels {
    pub group: String,
    pub period: String,
    pub weights: Option<String>,
    pub cluster: Option<String>,
}

fn indicator(data: &Dataset, name: &str) -> Result<Vec<bool>> {
    let v = data.finite(name)?;
    v.iter()
        .enumerate()
        .map(|(i, &x)| match x {
            x if x == 0.0 => Ok(false),
            x if x == 1.0 => Ok(true),
            _ => Err(Error::InvalidArgument(alloc::format!("`{name}` must be 0/1 (row {i})"))),
        })
        .collect()
}

/// Split `outcome` into the four cells.
pub fn cells_from_dataset(data: &Dataset, outcome: &[f64], labels: &CellLabels) -> Result<CellData> {
    let g = indicator(data, &labels.group)?;
    let t = indicator(data, &labels.period)?;
    let w = labels.weights.as_deref().map(|w| data.finite(w)).transpose()?;
    let c = labels.cluster.as_deref().map(|c| data.codes(c)).transpose()?;
    let mut cells: [Sample; 4] = core::array::from_fn(|_| Sample {
        values: Vec::new(),
        weights: w.map(|_| Vec::new()),
        clusters: c.as_ref().map(|_| Vec::new()),
    });
    for i in 0..data.n_rows() {
        let k = 2 * g[i] as usize + t[i] as usize;
        let s = &mut cells[k];
        s.values.push(outcome[i]);
        if let (Some(ws), Some(w)) = (s.weights.as_mut(), w) {
            ws.push(w[i]);
        }
        if let (Some(cs), Some(c)) = (s.clusters.as_mut(), &c) {
            cs.push(c.codes[i]);
        }
    }
    let [cpre, cpost, tpre, tpost] = cells;
    CellData::new(cpre, cpost, tpre, tpost)
}

/// Cells of covariate-adjusted outcomes: the pooled weighted regression
/// of the outcome on covariates and the four cell indicators gives `g`,
/// and each cell holds `y - X g`.
pub fn covariate_adjusted_cells(data: &Dataset, outcome: &str, covariates: &[&str], labels: &CellLabels) -> Result<CellData> {
    let y = data.finite(outcome)?;
    if covariates.is_empty() {
        return cells_from_dataset(data, y, labels);
    }
    let g = indicator(data, &labels.group)?;
    let t = indicator(data, &labels.period)?;
    let mut work = data.clone();
    let cell_names = ["_cell_cpre", "_cell_cpost", "_cell_tpre", "_cell_tpost"];
    for (k, name) in cell_names.iter().enumerate() {
        let d = (0..data.n_rows())
            .map(|i| if 2 * g[i] as usize + t[i] as usize == k { 1.0 } else { 0.0 })
            .collect();
        work.set_numeric(*name, d)?;
    }
    let mut spec = ModelSpec::new(outcome)
        .exog(covariates.iter().copied().chain(cell_names))
        .no_intercept();
    if let Some(w) = &labels.weights {
        spec = spec.weights(w.clone());
    }
    let fit = ols::wls_fit(&work, &spec)?;
    if let Some(name) = fit.dropped_collinear.first() {
        return Err(Error::Collinear(name.clone()));
    }
    let mut adj = y.to_vec();
    for cov in covariates {
        let gamma = fit.coef(cov).ok_or_else(|| Error::Collinear((*cov).into()))?;
        let x = data.finite(cov)?;
        for (a, xi) in adj.iter_mut().zip(x) {
            *a -= gamma * xi;
        }
    }
    cells_from_dataset(data, &adj, labels)
}

pub fn cic_with_covariates(
    data: &Dataset,
    outcome: &str,
    covariates: &[&str],
    labels: &CellLabels,
    percentiles: &[f64],
    policy: SupportPolicy,
) -> Result<QuantileEffectCurve> {
    cic_effects(&covariate_adjusted_cells(data, outcome, covariates, labels)?, percentiles, policy)
}

/// Resampled cells for bootstrap replication `rep` of stream `seed`.
pub fn resample(cells: &CellData, seed: u64, rep: u64) -> CellData {
    let mut g = rng::stream(seed, rep);
    let all = cells.cells();
    if cells.has_clusters() {
        let mut ids: Vec<u32> = all.iter().flat_map(|s| s.clusters.as_ref().unwrap().iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        let max = *ids.last().unwrap() as usize;
        let mut mult = vec![0.0; max + 1];
        for _ in 0..ids.len() {
            mult[ids[g.random_range(0..ids.len())] as usize] += 1.0;
        }
        let rw = |s: &Sample| {
            let m: Vec<f64> = s.clusters.as_ref().unwrap().iter().map(|&c| mult[c as usize]).collect();
            s.reweighted(&m)
        };
        CellData {
            control_pre: rw(all[0]),
            control_post: rw(all[1]),
            treated_pre: rw(all[2]),
            treated_post: rw(all[3]),
        }
    } else {
        let mut rw = |s: &Sample| {
            let n = s.len();
            let mut m = vec![0.0; n];
            for _ in 0..n {
                m[g.random_range(0..n)] += 1.0;
            }
            s.reweighted(&m)
        };
        CellData {
            control_pre: rw(all[0]),
            control_post: rw(all[1]),
            treated_pre: rw(all[2]),
            treated_post: rw(all[3]),
        }
    }
}

/// Effects on bootstrap replication `rep`; `None` when the resample is
/// infeasible (an empty cell or a support violation).
pub fn bootstrap_replicate(
    cells: &CellData,
    percentiles: &[f64],
    policy: SupportPolicy,
    seed: u64,
    rep: u64,
) -> Option<Vec<f64>> {
    let r = resample(cells, seed, rep);
    if r.cells().iter().any(|s| s.is_empty()) {
        return None;
    }
    effects_raw(&r, percentiles, policy).ok()
}

/// Cramér-von Mises statistics and bootstrap p values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvmResult {
    pub t_no_effect: f64,
    pub p_no_effect: f64,
    pub t_all_positive: f64,
    pub p_all_positive: f64,
    pub t_all_negative: f64,
    pub p_all_negative: f64,
    /// Feasible replications used.
    pub replications: u64,
    pub failed: u64,
}

fn cvm(d: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    d.iter().map(|&e| {
        let v = f(e);
        v * v
    }).sum::<f64>() / d.len() as f64
}

fn p_of(t: f64, draws: &[f64]) -> Result<f64> {
    if t > 0.0 && draws.iter().all(|&d| d == 0.0) {
        return Err(Error::Degenerate("bootstrap distribution is a point mass at zero"));
    }
    let count = draws.iter().filter(|&&d| at_least(d, t)).count();
    Ok((1 + count) as f64 / (draws.len() + 1) as f64)
}

/// CvM tests from the point estimates and bootstrap effect draws. The
/// bootstrap functionals are computed on draws recentered at the point
/// estimates.
pub fn cvm_from_draws(effects: &[f64], draws: &[Vec<f64>], failed: u64) -> Result<CvmResult> {
    if draws.is_empty() {
        return Err(Error::Degenerate("no feasible bootstrap replications"));
    }
    let neg = |e: f64| e.min(0.0);
    let pos = |e: f64| e.max(0.0);
    let id = |e: f64| e;
    let centered: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| d.iter().zip(effects).map(|(a, b)| a - b).collect())
        .collect();
    let stat = |f: &dyn Fn(f64) -> f64| centered.iter().map(|d| cvm(d, f)).collect::<Vec<_>>();
    let (t0, tp, tn) = (cvm(effects, id), cvm(effects, neg), cvm(effects, pos));
    Ok(CvmResult {
        t_no_effect: t0,
        p_no_effect: p_of(t0, &stat(&id))?,
        t_all_positive: tp,
        p_all_positive: p_of(tp, &stat(&neg))?,
        t_all_negative: tn,
        p_all_negative: p_of(tn, &stat(&pos))?,
        replications: draws.len() as u64,
        failed,
    })
}

/// Percentile-method intervals from bootstrap draws, widened where needed
/// so that each contains its point estimate.
pub fn percentile_intervals(effects: &[f64], draws: &[Vec<f64>], level: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if draws.is_empty() {
        return Err(Error::Degenerate("no feasible bootstrap replications"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("level must be in (0, 1)".into()));
    }
    let a = 0.5 * (1.0 - level);
    let mut lo = Vec::with_capacity(effects.len());
    let mut hi = Vec::with_capacity(effects.len());
    for (j, &e) in effects.iter().enumerate() {
        let s = Sample::new(draws.iter().map(|d| d[j]).collect()).ecdf();
        lo.push(s.quantile(a).min(e));
        hi.push(s.quantile(1.0 - a).max(e));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CicBootstrapConfig {
    pub replications: u64,
    pub seed: u64,
    pub level: f64,
    pub policy: SupportPolicy,
}

impl Default for CicBootstrapConfig {
    fn default() -> Self {
        CicBootstrapConfig { replications: 999, seed: 0, level: 0.95, policy: SupportPolicy::Error }
    }
}

/// Split replication results into feasible draws and a failure count.
pub fn collect_draws(results: Vec<Option<Vec<f64>>>) -> (Vec<Vec<f64>>, u64) {
    let failed = results.iter().filter(|r| r.is_none()).count() as u64;
    (results.into_iter().flatten().collect(), failed)
}

/// Effects with percentile intervals and CvM tests, bootstrapped
/// sequentially.
pub fn cic_bootstrap(cells: &CellData, percentiles: &[f64], cfg: &CicBootstrapConfig) -> Result<(QuantileEffectCurve, CvmResult)> {
    let mut curve = cic_effects(cells, percentiles, cfg.policy)?;
    let results = (0..cfg.replications)
        .map(|r| bootstrap_replicate(cells, percentiles, cfg.policy, cfg.seed, r))
        .collect();
    let (draws, failed) = collect_draws(results);
    finish_bootstrap(&mut curve, &draws, failed, cfg)
        .map(|cvm| (curve, cvm))
}

/// Attach intervals to `curve` and compute the CvM tests.
pub fn finish_bootstrap(curve: &mut QuantileEffectCurve, draws: &[Vec<f64>], failed: u64, cfg: &CicBootstrapConfig) -> Result<CvmResult> {
    if (draws.len() as u64) * 2 < cfg.replications {
        return Err(Error::Degenerate("more than half of the bootstrap resamples are infeasible"));
    }
    let (lo, hi) = percentile_intervals(&curve.effects, draws, cfg.level)?;
    curve.ci_lower = Some(lo);
    curve.ci_upper = Some(hi);
    curve.replications = cfg.replications;
    curve.seed = Some(cfg.seed);
    cvm_from_draws(&curve.effects, draws, failed)
}

/// CvM tests alone.
pub fn cvm_tests(cells: &CellData, percentiles: &[f64], cfg: &CicBootstrapConfig) -> Result<CvmResult> {
    cic_bootstrap(cells, percentiles, cfg).map(|(_, c)| c)
}

/// Groups with a positive residual from the cross-group OLS of treatment
/// on the covariate and an intercept. With `intercept_fallback`, a
/// constant covariate (or fewer than three groups) uses deviations from
/// the mean instead of failing.
pub fn high_treatment_split(treatment: &[f64], covariate: &[f64], intercept_fallback: bool) -> Result<Vec<bool>> {
    let n = treatment.len();
    if covariate.len() != n {
        return Err(Error::LengthMismatch { name: "covariate".into(), expected: n, found: covariate.len() });
    }
    if treatment.iter().chain(covariate).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("treatment and covariate must be finite".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let constant = covariate.iter().all(|&c| c == covariate[0]);
    let resid: Vec<f64> = if n >= 3 && !constant {
        let (mx, my) = (mean(covariate), mean(treatment));
        let sxx: f64 = covariate.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = covariate.iter().zip(treatment).map(|(x, y)| (x - mx) * (y - my)).sum();
        let b = sxy / sxx;
        covariate.iter().zip(treatment).map(|(x, y)| y - my - b * (x - mx)).collect()
    } else if intercept_fallback && n >= 2 {
        let my = mean(treatment);
        treatment.iter().map(|y| y - my).collect()
    } else if n < 3 {
        return Err(Error::InsufficientObservations { n_obs: n, n_params: 3 });
    } else {
        return Err(Error::Degenerate("covariate is constant across groups"));
    };
    let scale = treatment.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v))).max(1.0);
    Ok(resid.iter().map(|&r| r > 1e-10 * scale).collect())
}
