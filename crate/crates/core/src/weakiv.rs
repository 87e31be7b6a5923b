//! Weak-identification-robust inference for one endogenous regressor.
//!
//! # Anderson-Rubin statistic
//!
//! For a trial value `b0`, form `y - b0 * x`, regress it on the exogenous
//! regressors, fixed effects and excluded instruments, and take the
//! cluster-robust Wald statistic for the instrument coefficients.
//!
//! # Wild restricted efficient bootstrap
//!
//! The regression sequence for one trial value is:
//!
//! 1. Null-imposed structural equation: regress `y - b0 * x` on the
//!    exogenous regressors and fixed effects only. Because the AR null also
//!    sets the instrument coefficients to zero, this is the restricted
//!    reduced form; keep fitted values and residuals `u`.
//! 2. Efficient first stage: regress `x` on exogenous regressors,
//!    instruments and `u`, and rebuild `x*` from its residuals under the
//!    same cluster signs.
//! 3. Rebuild `y* = x* b0 + fitted + u * v_g`, with `v_g` a Rademacher sign
//!    per cluster.
//! 4. Recompute the AR statistic on `y* - x* b0`.
//!
//! In step 4 `x*` cancels exactly, so steps 2 and the `x*` part of step 3
//! never influence the AR statistic and are not computed.
//!
//! When every fixed-effect dimension is nested within clusters, `M(u * v) =
//! M(u) * v`, and each replication reduces to cluster-level sums of fixed
//! size. Otherwise the sign-flipped residual is re-absorbed every
//! replication.
//!
//! The bootstrap p value is `(1 + #{T* >= T}) / (B + 1)`; a bootstrap
//! statistic within a relative `1e-9` of the observed one counts as at least
//! as large. When `2^G <= B` all sign patterns are enumerated instead and
//! the p value is the exact share of patterns with `T* >= T`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::absorb::{AbsorbOptions, Absorber};
use crate::data::{Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::iv::{self, IvFitResult};
use crate::linalg::{self, Matrix, Vector};
use crate::ols::{exog_names, Frame};
use crate::rng;
use crate::vce::{self, Clusters};
use crate::wald;

/// Relative tolerance under which a bootstrap statistic ties the observed.
pub const TIE_TOL: f64 = 1e-9;

/// Default bootstrap replications.
pub const DEFAULT_REPLICATIONS: u64 = 99_999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BootstrapMode {
    /// Enumerate when `2^G <= B`, otherwise draw.
    #[default]
    Auto,
    Random,
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replications: u64,
    pub seed: u64,
    pub mode: BootstrapMode,
}

impl BootstrapConfig {
    pub fn new(replications: u64, seed: u64) -> Self {
        BootstrapConfig {
            replications,
            seed,
            mode: BootstrapMode::Auto,
        }
    }

    pub fn mode(mut self, mode: BootstrapMode) -> Self {
        self.mode = mode;
        self
    }

    /// Whether `n_clusters` would be enumerated under this configuration.
    pub fn enumerates(&self, n_clusters: usize) -> Result<bool> {
        let small = n_clusters < 64 && (1u64 << n_clusters) <= self.replications;
        match self.mode {
            BootstrapMode::Auto => Ok(small),
            BootstrapMode::Random => Ok(false),
            BootstrapMode::Enumerate => {
                if n_clusters >= 40 {
                    Err(Error::InvalidArgument("too many clusters to enumerate".into()))
                } else {
                    Ok(true)
                }
            }
        }
    }
}

/// Bootstrap p value with the counts behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapP {
    pub p: f64,
    pub observed: f64,
    pub exceedances: u64,
    /// Draws made, or `2^G` when enumerated.
    pub replications: u64,
    pub enumerated: bool,
}

#[inline]
pub fn at_least(stat: f64, observed: f64) -> bool {
    stat >= observed - TIE_TOL * libm::fabs(observed)
}

/// Absorbed data for Anderson-Rubin tests at arbitrary trial values.
#[derive(Debug, Clone)]
pub struct ArProblem {
    n: usize,
    weights: Option<Vec<f64>>,
    clusters: Clusters,
    absorber: Absorber,
    nested: bool,
    y: Vec<f64>,
    x: Vec<f64>,
    /// `[exog | instruments]`, absorbed and screened.
    a: Matrix,
    n_exog: usize,
    bread: Matrix,
    restricted_bread: Option<Matrix>,
    k_vce: usize,
    pub instruments: Vec<String>,
}

impl ArProblem {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        Self::with_options(data, spec, AbsorbOptions::default())
    }

    pub fn with_options(data: &Dataset, spec: &ModelSpec, opts: AbsorbOptions) -> Result<Self> {
        if spec.endog.len() != 1 {
            return Err(Error::Unsupported("Anderson-Rubin tests need exactly one endogenous regressor"));
        }
        let frame = Frame::new(data, spec, opts)?;
        if vce::count_present(&frame.clusters) < 2 {
            return Err(Error::TooFewClusters(vce::count_present(&frame.clusters)));
        }
        let exog = exog_names(spec);
        let cand: Vec<String> = exog.iter().chain(&spec.instruments).cloned().collect();
        let raw = cand.iter().map(|c| frame.raw(data, c)).collect::<Result<Vec<_>>>()?;
        let abs = raw.iter().map(|c| frame.absorb(c)).collect::<Result<Vec<_>>>()?;
        let kept = frame.screen(&raw, &abs);
        let n_exog = kept.iter().filter(|&&j| j < exog.len()).count();
        let instruments: Vec<String> = kept.iter().filter(|&&j| j >= exog.len()).map(|&j| cand[j].clone()).collect();
        if instruments.is_empty() {
            return Err(Error::InvalidSpec("no usable excluded instrument".into()));
        }
        let cols: Vec<&[f64]> = kept.iter().map(|&j| abs[j].as_slice()).collect();
        let a = linalg::from_columns(frame.n, &cols);
        let w = frame.w();
        let k = cols.len();
        if frame.n < k + frame.fe_dof {
            return Err(Error::InsufficientObservations { n_obs: frame.n, n_params: k + frame.fe_dof });
        }
        let (_, bread) = linalg::wls_solve(&a, &vec![0.0; frame.n], w)?;
        let restricted_bread = if n_exog > 0 {
            let e = a.columns(0, n_exog).into_owned();
            Some(linalg::wls_solve(&e, &vec![0.0; frame.n], w)?.1)
        } else {
            None
        };
        let y = frame.absorb(data.finite(&spec.outcome)?)?;
        let x = frame.absorb(data.finite(&spec.endog[0])?)?;
        Ok(ArProblem {
            n: frame.n,
            weights: frame.weights.clone(),
            clusters: frame.clusters.clone(),
            nested: frame.fe_nested,
            absorber: frame.absorber,
            y,
            x,
            a,
            n_exog,
            bread,
            restricted_bread,
            k_vce: k + frame.fe_dof_vce,
            instruments,
        })
    }

    pub fn n_clusters(&self) -> usize {
        vce::count_present(&self.clusters)
    }

    fn w(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn n_inst(&self) -> usize {
        self.a.ncols() - self.n_exog
    }

    fn target(&self, beta0: f64) -> Vec<f64> {
        self.y.iter().zip(&self.x).map(|(y, x)| y - beta0 * x).collect()
    }

    /// AR statistic for an absorbed outcome vector.
    fn wald_for(&self, ytilde: &[f64]) -> Result<f64> {
        let aty = iv::weighted_cross_vec(&self.a, ytilde, self.w());
        let beta = &self.bread * aty;
        let fitted = &self.a * &beta;
        let resid: Vec<f64> = ytilde.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
        let v = vce::cluster_robust_vce(&self.a, &self.bread, &resid, self.w(), &self.clusters, self.k_vce)?;
        let l = self.n_inst();
        let mut rb = beta.rows(self.n_exog, l).into_owned();
        // An instrument whose fitted contribution is at rounding level is
        // treated as exactly irrelevant.
        let target = linalg::weighted_norm(ytilde, self.w());
        for j in 0..l {
            let col: Vec<f64> = self.a.column(self.n_exog + j).iter().copied().collect();
            if libm::fabs(rb[j]) * linalg::weighted_norm(&col, self.w()) <= 1e-12 * target {
                rb[j] = 0.0;
            }
        }
        let middle = v.view((self.n_exog, self.n_exog), (l, l)).into_owned();
        wald::quadratic_form(&middle, &rb)
    }

    pub fn statistic(&self, beta0: f64) -> Result<f64> {
        self.wald_for(&self.target(beta0))
    }

    /// Precompute everything the bootstrap needs at one trial value.
    pub fn bootstrap(&self, beta0: f64) -> Result<ArBootstrap<'_>> {
        let ytilde = self.target(beta0);
        let observed = self.wald_for(&ytilde)?;
        let w = self.w();
        let restricted = match &self.restricted_bread {
            Some(rb) => {
                let e = self.a.columns(0, self.n_exog);
                let ety = e.transpose() * Vector::from_iterator(self.n, ytilde.iter().enumerate().map(|(i, v)| w.map_or(1.0, |w| w[i]) * v));
                let g = rb * ety;
                let fit = e * g;
                ytilde.iter().zip(fit.iter()).map(|(a, b)| a - b).collect()
            }
            None => ytilde.clone(),
        };
        if restricted.iter().any(|v: &f64| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite restricted residuals"));
        }
        let g = self.clusters.n_clusters;
        let kernel = if self.nested {
            BootKernel::Aggregated(self.aggregate(&restricted))
        } else {
            BootKernel::Reabsorb
        };
        Ok(ArBootstrap {
            problem: self,
            observed,
            ytilde,
            restricted,
            kernel,
            n_clusters: g,
        })
    }

    fn aggregate(&self, e: &[f64]) -> Aggregates {
        let k = self.a.ncols();
        let l = self.n_inst();
        let g = self.clusters.n_clusters;
        let w = self.w();
        let mut c = Matrix::zeros(k, g);
        let mut hg: Vec<Matrix> = vec![Matrix::zeros(k, k); g];
        for i in 0..self.n {
            let cl = self.clusters.ids[i] as usize;
            let wi = w.map_or(1.0, |w| w[i]);
            for p in 0..k {
                let ap = self.a[(i, p)];
                c[(p, cl)] += ap * wi * e[i];
                for q in 0..k {
                    hg[cl][(p, q)] += ap * wi * self.a[(i, q)];
                }
            }
        }
        let p_mat = self.bread.rows(self.n_exog, l).into_owned();
        let pc = &p_mat * &c;
        let ph: Vec<Matrix> = hg.iter().map(|h| &p_mat * h).collect();
        let factor = vce::cr1_factor(self.n, self.clusters.n_clusters, self.k_vce).unwrap_or(1.0);
        Aggregates { c, pc, ph, factor }
    }
}

#[derive(Debug, Clone)]
struct Aggregates {
    /// `K x G` cluster score sums of restricted residuals.
    c: Matrix,
    /// `L x G`, `P c_g` with `P` the instrument rows of the bread.
    pc: Matrix,
    /// `P H_g`, each `L x K`.
    ph: Vec<Matrix>,
    factor: f64,
}

#[derive(Debug, Clone)]
enum BootKernel {
    Aggregated(Aggregates),
    Reabsorb,
}

/// Bootstrap state at a fixed trial value.
#[derive(Debug, Clone)]
pub struct ArBootstrap<'a> {
    problem: &'a ArProblem,
    observed: f64,
    ytilde: Vec<f64>,
    restricted: Vec<f64>,
    kernel: BootKernel,
    n_clusters: usize,
}

impl ArBootstrap<'_> {
    pub fn observed(&self) -> f64 {
        self.observed
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// AR statistic when cluster `g`'s restricted residuals are multiplied
    /// by `signs[g]`.
    pub fn statistic_for(&self, signs: &[f64]) -> f64 {
        match &self.kernel {
            BootKernel::Aggregated(agg) => self.aggregated_stat(agg, signs),
            BootKernel::Reabsorb => self.reabsorbed_stat(signs),
        }
    }

    fn aggregated_stat(&self, agg: &Aggregates, v: &[f64]) -> f64 {
        let p = self.problem;
        let l = p.n_inst();
        let sum_c = &agg.c * Vector::from_column_slice(v);
        let delta = &p.bread * &sum_c;
        let rdelta = agg.pc.clone() * Vector::from_column_slice(v);
        if rdelta.iter().all(|&d| d == 0.0) {
            return 0.0;
        }
        let mut meat = Matrix::zeros(l, l);
        let mut ps = Vector::zeros(l);
        for g in 0..self.n_clusters {
            let phd = &agg.ph[g] * &delta;
            for r in 0..l {
                ps[r] = v[g] * agg.pc[(r, g)] - phd[r];
            }
            for r in 0..l {
                for s in 0..l {
                    meat[(r, s)] += ps[r] * ps[s];
                }
            }
        }
        meat *= agg.factor;
        wald::quadratic_form(&meat, &rdelta).unwrap_or(f64::INFINITY)
    }

    fn reabsorbed_stat(&self, v: &[f64]) -> f64 {
        let p = self.problem;
        let mut u: Vec<f64> = self
            .restricted
            .iter()
            .zip(&p.clusters.ids)
            .map(|(e, &g)| e * v[g as usize])
            .collect();
        if p.absorber.demean(&mut u).is_err() {
            return f64::NAN;
        }
        let ystar: Vec<f64> = self
            .ytilde
            .iter()
            .zip(&self.restricted)
            .zip(&u)
            .map(|((yt, e), mu)| yt - e + mu)
            .collect();
        p.wald_for(&ystar).unwrap_or(f64::INFINITY)
    }

    /// Count of random replications `reps` (0-based indices) whose
    /// statistic is at least the observed one.
    pub fn count_random(&self, seed: u64, reps: core::ops::Range<u64>) -> u64 {
        let mut signs = vec![0.0; self.n_clusters];
        let mut count = 0;
        for r in reps {
            let mut g = rng::stream(seed, r);
            rng::rademacher(&mut g, &mut signs);
            if at_least(self.statistic_for(&signs), self.observed) {
                count += 1;
            }
        }
        count
    }

    /// Count over sign patterns `patterns` (each a `G`-bit mask).
    pub fn count_enumerated(&self, patterns: core::ops::Range<u64>) -> u64 {
        let mut signs = vec![0.0; self.n_clusters];
        let mut count = 0;
        for m in patterns {
            rng::sign_pattern(m, &mut signs);
            if at_least(self.statistic_for(&signs), self.observed) {
                count += 1;
            }
        }
        count
    }

    /// Full p value, evaluated sequentially.
    pub fn p_value(&self, cfg: &BootstrapConfig) -> Result<BootstrapP> {
        let enumerated = cfg.enumerates(self.n_clusters)?;
        if enumerated {
            let total = 1u64 << self.n_clusters;
            let count = self.count_enumerated(0..total);
            Ok(finish_enumerated(self.observed, count, total))
        } else {
            if cfg.replications == 0 {
                return Err(Error::InvalidArgument("replications must be positive".into()));
            }
            let count = self.count_random(cfg.seed, 0..cfg.replications);
            Ok(finish_random(self.observed, count, cfg.replications))
        }
    }
}

pub fn finish_random(observed: f64, count: u64, reps: u64) -> BootstrapP {
    BootstrapP {
        p: (1 + count) as f64 / (reps + 1) as f64,
        observed,
        exceedances: count,
        replications: reps,
        enumerated: false,
    }
}

pub fn finish_enumerated(observed: f64, count: u64, total: u64) -> BootstrapP {
    BootstrapP {
        p: count as f64 / total as f64,
        observed,
        exceedances: count,
        replications: total,
        enumerated: true,
    }
}

/// Anderson-Rubin statistic at `beta0`.
pub fn ar_statistic(data: &Dataset, spec: &ModelSpec, beta0: f64) -> Result<f64> {
    ArProblem::new(data, spec)?.statistic(beta0)
}

/// Wild restricted efficient bootstrap p value of the AR test at `beta0`.
pub fn wre_bootstrap_p(data: &Dataset, spec: &ModelSpec, beta0: f64, cfg: &BootstrapConfig) -> Result<BootstrapP> {
    ArProblem::new(data, spec)?.bootstrap(beta0)?.p_value(cfg)
}

/// Bootstrap p value as a function of the trial coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCurve {
    pub trial_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
}

impl ConfidenceCurve {
    pub fn new(trial_values: Vec<f64>, p_values: Vec<f64>, replications: u64, seed: u64) -> Result<Self> {
        check_grid(&trial_values)?;
        if p_values.len() != trial_values.len() {
            return Err(Error::InvalidArgument("p values must align with the grid".into()));
        }
        if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("p values must lie in [0, 1]".into()));
        }
        Ok(ConfidenceCurve { trial_values, p_values, replications, seed })
    }
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("trial grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("trial grid must be finite, ascending and duplicate-free".into()));
    }
    Ok(())
}

/// Sequential confidence curve. All grid points share the same bootstrap
/// draws.
pub fn confidence_curve(data: &Dataset, spec: &ModelSpec, grid: &[f64], cfg: &BootstrapConfig) -> Result<ConfidenceCurve> {
    check_grid(grid)?;
    let problem = ArProblem::new(data, spec)?;
    let p = grid
        .iter()
        .map(|&b| Ok(problem.bootstrap(b)?.p_value(cfg)?.p))
        .collect::<Result<Vec<_>>>()?;
    ConfidenceCurve::new(grid.to_vec(), p, cfg.replications, cfg.seed)
}

/// `points` evenly spaced values spanning the 2SLS estimate plus or minus
/// `width` classical standard errors.
pub fn default_grid(iv: &IvFitResult, points: usize, width: f64) -> Vec<f64> {
    let name = &iv.endog[0];
    let b = iv.fit.coef(name).unwrap_or(0.0);
    let mut se = classical_se(iv).unwrap_or(1.0);
    if !(se.is_finite() && se > 0.0) {
        se = 1.0;
    }
    let points = points.max(2);
    let lo = b - width * se;
    let step = 2.0 * width * se / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// Homoskedastic 2SLS standard error of the endogenous coefficient.
pub fn classical_se(iv: &IvFitResult) -> Option<f64> {
    let f = &iv.fit;
    let w = f.weights();
    let ssr: f64 = f.residuals.iter().enumerate().map(|(i, e)| w.map_or(1.0, |w| w[i]) * e * e).sum();
    let dof = f.dof_residual.max(1) as f64;
    Some(libm::sqrt(f.bread[(0, 0)] * ssr / dof))
}

/// One interval of a confidence set; ends may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Finite union of disjoint, ordered intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub intervals: Vec<Interval>,
    pub level: f64,
}

impl ConfidenceSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, b: f64) -> bool {
        self.intervals.iter().any(|i| i.lower <= b && b <= i.upper)
    }

    pub fn is_bounded(&self) -> bool {
        self.intervals.iter().all(|i| i.lower.is_finite() && i.upper.is_finite())
    }
}

fn write_end(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v == f64::INFINITY {
        f.write_str("inf")
    } else if v == f64::NEG_INFINITY {
        f.write_str("-inf")
    } else if let Some(p) = f.precision() {
        write!(f, "{v:.p$}")
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for ConfidenceSet {
    /// `[-0.58, 0.97]`, `(-inf, -0.37] U [0.04, inf)`, `(-inf, inf)`, or
    /// `empty`. Honors `{:.N}` precision for finite ends.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return f.write_str("empty");
        }
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(" U ")?;
            }
            f.write_str(if iv.lower.is_finite() { "[" } else { "(" })?;
            write_end(f, iv.lower)?;
            f.write_str(", ")?;
            write_end(f, iv.upper)?;
            f.write_str(if iv.upper.is_finite() { "]" } else { ")" })?;
        }
        Ok(())
    }
}

fn parse_end(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(alloc::format!("bad interval end `{t}`"))),
    }
}

/// Parses interval notation; the level is not part of the notation and is
/// set to NaN.
impl FromStr for ConfidenceSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut intervals = Vec::new();
        if s != "empty" {
            for part in s.split(" U ") {
                let part = part.trim();
                let bad = || Error::InvalidArgument(alloc::format!("bad interval `{part}`"));
                let open = part.chars().next().ok_or_else(bad)?;
                let close = part.chars().last().ok_or_else(bad)?;
                if !matches!(open, '[' | '(') || !matches!(close, ']' | ')') || part.len() < 2 {
                    return Err(bad());
                }
                let inner = &part[1..part.len() - 1];
                let (a, b) = inner.split_once(',').ok_or_else(bad)?;
                let (lower, upper) = (parse_end(a)?, parse_end(b)?);
                if (open == '[') != lower.is_finite() || (close == ']') != upper.is_finite() || lower > upper {
                    return Err(bad());
                }
                intervals.push(Interval { lower, upper });
            }
        }
        if intervals.windows(2).any(|w| w[1].lower <= w[0].upper) {
            return Err(Error::InvalidArgument("intervals must be ordered and disjoint".into()));
        }
        Ok(ConfidenceSet { intervals, level: f64::NAN })
    }
}

/// Default bisection tolerance relative to the grid's magnitude.
pub const CROSSING_REL_TOL: f64 = 1e-5;

/// Level set `{b : p(b) > 1 - level}` of a confidence curve.
///
/// Each crossing between an excluded and an included grid point is
/// located by bisection on `refine` (or by linear interpolation of the
/// curve when `refine` is `None`) to `CROSSING_REL_TOL` times the grid's
/// largest absolute value. An included first or last grid point yields an
/// infinite end.
pub fn extract_confidence_set(
    curve: &ConfidenceCurve,
    level: f64,
    mut refine: Option<&mut dyn FnMut(f64) -> Result<f64>>,
) -> Result<ConfidenceSet> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("level must be in (0, 1)".into()));
    }
    let alpha = 1.0 - level;
    let g = &curve.trial_values;
    let p = &curve.p_values;
    let scale = g.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v))).max(f64::MIN_POSITIVE);
    let tol = CROSSING_REL_TOL * scale;
    let inside = |v: f64| v > alpha;
    let mut crossing = |out_b: f64, out_p: f64, in_b: f64, in_p: f64| -> Result<f64> {
        match refine.as_mut() {
            Some(f) => {
                let (mut o, mut i) = (out_b, in_b);
                while libm::fabs(i - o) > tol {
                    let m = 0.5 * (o + i);
                    if inside(f(m)?) {
                        i = m;
                    } else {
                        o = m;
                    }
                }
                Ok(0.5 * (o + i))
            }
            None => {
                let t = (alpha - out_p) / (in_p - out_p);
                Ok(out_b + t * (in_b - out_b))
            }
        }
    };
    let mut intervals = Vec::new();
    let mut i = 0;
    while i < g.len() {
        if !inside(p[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < g.len() && inside(p[i + 1]) {
            i += 1;
        }
        let end = i;
        let lower = if start == 0 {
            f64::NEG_INFINITY
        } else {
            crossing(g[start - 1], p[start - 1], g[start], p[start])?
        };
        let upper = if end + 1 == g.len() {
            f64::INFINITY
        } else {
            crossing(g[end + 1], p[end + 1], g[end], p[end])?
        };
        intervals.push(Interval { lower, upper });
        i += 1;
    }
    Ok(ConfidenceSet { intervals, level })
}
