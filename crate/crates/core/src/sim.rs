//! Monte Carlo study of Wald DID and Wald CIC under endogenous,
//! multi-valued treatment.
//!
//! Group `j` in period `t` has latent instrument `Z_jt ~ N(0,1)` and shock
//! `s_jt` (`s_j0 = 0`, `s_j1 ~ N(0,1)`). Each subject falls in period 0 or 1
//! by a fair coin and has treatment `S = ceil(Z_jt + s_jt + u)` and outcome
//! `Y = beta * S + v`, where `(u, v)` are standard normal with correlation
//! `rho`.
//!
//! Groups are sorted into decreasing, flat and increasing supergroups by a
//! two-sample test of equal mean treatment across periods. Three
//! estimators are compared: 2SLS with the perfect instrument `Z`, 2SLS
//! instrumented by supergroup-by-post dummies (flat as control), and a
//! Wald CIC ratio on the supergroups with flat as control.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::cic::{Sample, SupportPolicy, Transport};
use crate::data::{Categorical, Column, Dataset, ModelSpec};
use crate::dist;
use crate::error::{Error, Result};
use crate::iv;
use crate::rng;

/// Reference distribution for the supergroup test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupergroupTest {
    /// Squared mean difference over its pooled-variance SE, against `χ²(1)`.
    #[default]
    ChiSquare,
    /// The same statistic against `F(1, n0 + n1 - 2)`.
    F,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_groups: usize,
    pub n_per_group: usize,
    pub rho: f64,
    pub beta: f64,
    pub n_sims: usize,
    pub p_threshold: f64,
    pub seed: u64,
    pub test: SupergroupTest,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_groups: 100,
            n_per_group: 100,
            rho: 0.0,
            beta: 0.0,
            n_sims: 100,
            p_threshold: 0.5,
            seed: 0,
            test: SupergroupTest::ChiSquare,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.n_per_group == 0 || self.n_sims == 0 {
            return Err(Error::InvalidArgument("simulation counts must be positive".into()));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::InvalidArgument("rho must lie in [-1, 1]".into()));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(Error::InvalidArgument("p_threshold must lie in (0, 1)".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidArgument("beta must be finite".into()));
        }
        Ok(())
    }
}

/// One simulated panel of subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub n_groups: usize,
    pub group: Vec<u32>,
    pub period: Vec<u8>,
    pub treatment: Vec<f64>,
    pub outcome: Vec<f64>,
    /// Pre-ceiling treatment index `Z + s + u`.
    pub latent: Vec<f64>,
    /// `Z_jt`, indexed `[j][t]`.
    pub z: Vec<[f64; 2]>,
    /// `s_jt`, indexed `[j][t]`.
    pub s: Vec<[f64; 2]>,
}

impl SimDataset {
    pub fn len(&self) -> usize {
        self.group.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group.is_empty()
    }

    /// `Z_jt` for each observation.
    pub fn z_obs(&self) -> Vec<f64> {
        self.group.iter().zip(&self.period).map(|(&g, &t)| self.z[g as usize][t as usize]).collect()
    }

    /// Columns `group` (categorical), `period`, `S`, `Y`, `Z`.
    pub fn to_dataset(&self) -> Dataset {
        let mut d = Dataset::new(self.len());
        let levels = (0..self.n_groups).map(|g| alloc::format!("{g}")).collect();
        let group = Categorical { codes: self.group.clone(), levels };
        d.push("group", Column::Categorical(group)).unwrap();
        d.push("period", Column::Numeric(self.period.iter().map(|&t| t as f64).collect())).unwrap();
        d.push("S", Column::Numeric(self.treatment.clone())).unwrap();
        d.push("Y", Column::Numeric(self.outcome.clone())).unwrap();
        d.push("Z", Column::Numeric(self.z_obs())).unwrap();
        d
    }
}

pub fn generate_dataset(cfg: &SimConfig, sim_index: u64) -> SimDataset {
    let mut g = rng::stream(cfg.seed, sim_index);
    let gn = cfg.n_groups;
    let mut z = vec![[0.0; 2]; gn];
    for zj in z.iter_mut() {
        zj[0] = g.sample(StandardNormal);
        zj[1] = g.sample(StandardNormal);
    }
    let mut s = vec![[0.0; 2]; gn];
    for sj in s.iter_mut() {
        sj[1] = g.sample(StandardNormal);
    }
    let n = gn * cfg.n_per_group;
    let c = libm::sqrt((1.0 - cfg.rho * cfg.rho).max(0.0));
    let mut out = SimDataset {
        n_groups: gn,
        group: Vec::with_capacity(n),
        period: Vec::with_capacity(n),
        treatment: Vec::with_capacity(n),
        outcome: Vec::with_capacity(n),
        latent: Vec::with_capacity(n),
        z,
        s,
    };
    for j in 0..gn {
        for _ in 0..cfg.n_per_group {
            let t = g.random::<bool>() as usize;
            let u: f64 = g.sample(StandardNormal);
            let e: f64 = g.sample(StandardNormal);
            let v = cfg.rho * u + c * e;
            let latent = out.z[j][t] + out.s[j][t] + u;
            let treat = libm::ceil(latent);
            out.group.push(j as u32);
            out.period.push(t as u8);
            out.latent.push(latent);
            out.treatment.push(treat);
            out.outcome.push(cfg.beta * treat + v);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Supergroup {
    Decreasing,
    Flat,
    Increasing,
}

impl Supergroup {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// P value of the pooled-variance equal-means test.
pub fn equal_means_p(a: &[f64], b: &[f64], test: SupergroupTest) -> Result<f64> {
    let (n0, n1) = (a.len(), b.len());
    if n0 == 0 || n1 == 0 {
        return Err(Error::EmptySample("group missing a period"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m0, m1) = (mean(a), mean(b));
    let ss: f64 = a.iter().map(|x| (x - m0) * (x - m0)).sum::<f64>() + b.iter().map(|x| (x - m1) * (x - m1)).sum::<f64>();
    let dof = n0 + n1;
    if dof <= 2 || ss == 0.0 {
        return Ok(if m0 == m1 { 1.0 } else { 0.0 });
    }
    let sp = ss / (dof - 2) as f64;
    let stat = (m1 - m0) * (m1 - m0) / (sp * (1.0 / n0 as f64 + 1.0 / n1 as f64));
    Ok(match test {
        SupergroupTest::ChiSquare => dist::chi2_sf(stat, 1.0),
        SupergroupTest::F => dist::f_sf(stat, 1.0, (dof - 2) as f64),
    })
}

pub fn form_supergroups(data: &SimDataset, p_threshold: f64, test: SupergroupTest) -> Result<Vec<Supergroup>> {
    let mut cells: Vec<[Vec<f64>; 2]> = (0..data.n_groups).map(|_| [Vec::new(), Vec::new()]).collect();
    for i in 0..data.len() {
        cells[data.group[i] as usize][data.period[i] as usize].push(data.treatment[i]);
    }
    cells
        .iter()
        .map(|[a, b]| {
            let p = equal_means_p(a, b, test)?;
            let diff = b.iter().sum::<f64>() / b.len() as f64 - a.iter().sum::<f64>() / a.len() as f64;
            Ok(if p >= p_threshold {
                Supergroup::Flat
            } else if diff > 0.0 {
                Supergroup::Increasing
            } else {
                Supergroup::Decreasing
            })
        })
        .collect()
}

/// Supergroup counts: decreasing, flat, increasing.
pub fn supergroup_sizes(labels: &[Supergroup]) -> [usize; 3] {
    let mut c = [0; 3];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DidInstrument<'a> {
    /// The latent `Z_jt`.
    Perfect,
    /// Increasing-by-post and decreasing-by-post dummies.
    Supergroups(&'a [Supergroup]),
}

const INC_POST: &str = "inc_x_post";
const DEC_POST: &str = "dec_x_post";

/// 2SLS of `Y` on `S` with group and period fixed effects, clustered by
/// group.
pub fn wald_did(data: &SimDataset, instrument: DidInstrument<'_>) -> Result<f64> {
    let mut d = data.to_dataset();
    let instruments: Vec<&str> = match instrument {
        DidInstrument::Perfect => vec!["Z"],
        DidInstrument::Supergroups(labels) => {
            if labels.len() != data.n_groups {
                return Err(Error::LengthMismatch { name: "supergroup labels".into(), expected: data.n_groups, found: labels.len() });
            }
            let mut names = Vec::new();
            for (name, which) in [(INC_POST, Supergroup::Increasing), (DEC_POST, Supergroup::Decreasing)] {
                if labels.contains(&which) {
                    let v = data
                        .group
                        .iter()
                        .zip(&data.period)
                        .map(|(&g, &t)| if labels[g as usize] == which && t == 1 { 1.0 } else { 0.0 })
                        .collect();
                    d.push(name, Column::Numeric(v))?;
                    names.push(name);
                }
            }
            if names.is_empty() {
                return Err(Error::Degenerate("no group changed treatment"));
            }
            names
        }
    };
    let spec = ModelSpec::new("Y")
        .endog(["S"])
        .instruments(instruments)
        .fixed_effects(["group", "period"])
        .cluster("group");
    let fit = iv::tsls_fit(&d, &spec)?;
    Ok(fit.fit.coef("S").unwrap())
}

/// Wald CIC: for each non-flat supergroup, the change in mean `Y` beyond
/// the flat group's quantile transport of its pre-period outcomes, over
/// the same quantity for `S`. The two ratios are combined weighting by
/// supergroup size times the absolute treatment change. Pre-period values
/// outside the flat group's support are clipped to it.
pub fn wald_cic(data: &SimDataset, labels: &[Supergroup]) -> Result<f64> {
    if labels.len() != data.n_groups {
        return Err(Error::LengthMismatch { name: "supergroup labels".into(), expected: data.n_groups, found: labels.len() });
    }
    // cells[label][period] for (S, Y)
    let mut s: [[Vec<f64>; 2]; 3] = Default::default();
    let mut y: [[Vec<f64>; 2]; 3] = Default::default();
    for i in 0..data.len() {
        let l = labels[data.group[i] as usize].index();
        let t = data.period[i] as usize;
        s[l][t].push(data.treatment[i]);
        y[l][t].push(data.outcome[i]);
    }
    let flat = Supergroup::Flat.index();
    if s[flat][0].is_empty() || s[flat][1].is_empty() {
        return Err(Error::EmptySample("flat supergroup lacks a period"));
    }
    let transport = |v: &[[Vec<f64>; 2]; 3]| {
        Transport::new(&Sample::new(v[flat][0].clone()), &Sample::new(v[flat][1].clone()), SupportPolicy::Clip)
    };
    let (ts, ty) = (transport(&s)?, transport(&y)?);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let delta = |t: &Transport, c: &[Vec<f64>; 2]| -> Result<f64> {
        let cf = c[0].iter().map(|&v| t.apply(v)).collect::<Result<Vec<_>>>()?;
        Ok(mean(&c[1]) - mean(&cf))
    };
    let (mut num, mut den) = (0.0, 0.0);
    let mut used = 0;
    for sg in [Supergroup::Increasing, Supergroup::Decreasing] {
        let k = sg.index();
        if s[k][0].is_empty() || s[k][1].is_empty() {
            continue;
        }
        let n = (s[k][0].len() + s[k][1].len()) as f64;
        let ds = delta(&ts, &s[k])?;
        let dy = delta(&ty, &y[k])?;
        if ds != 0.0 {
            num += n * ds.signum() * dy;
            den += n * libm::fabs(ds);
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Degenerate("no treated supergroup"));
    }
    if den == 0.0 {
        return Err(Error::Degenerate("Wald CIC denominator is zero"));
    }
    Ok(num / den)
}

/// Per-simulation results; a failed estimator is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub sizes: [usize; 3],
    pub did_perfect: Option<f64>,
    pub did_supergroups: Option<f64>,
    pub cic: Option<f64>,
}

impl SimOutcome {
    pub fn completed(&self) -> bool {
        self.did_perfect.is_some() && self.did_supergroups.is_some() && self.cic.is_some()
    }
}

pub fn simulate_one(cfg: &SimConfig, sim_index: u64) -> SimOutcome {
    let data = generate_dataset(cfg, sim_index);
    let labels = match form_supergroups(&data, cfg.p_threshold, cfg.test) {
        Ok(l) => l,
        Err(_) => {
            return SimOutcome { sizes: [0; 3], did_perfect: wald_did(&data, DidInstrument::Perfect).ok(), did_supergroups: None, cic: None }
        }
    };
    SimOutcome {
        sizes: supergroup_sizes(&labels),
        did_perfect: wald_did(&data, DidInstrument::Perfect).ok(),
        did_supergroups: wald_did(&data, DidInstrument::Supergroups(&labels)).ok(),
        cic: wald_cic(&data, &labels).ok(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub config: SimConfig,
    /// Wald DID on groups (perfect instrument), Wald DID on supergroups,
    /// Wald CIC on supergroups.
    pub estimators: [EstimatorSummary; 3],
    /// Decreasing, flat, increasing.
    pub size_mean: [f64; 3],
    pub size_sd: [f64; 3],
    /// Simulations where every estimator succeeded.
    pub completed: usize,
    pub n_sims: usize,
}

pub const ESTIMATOR_NAMES: [&str; 3] = ["Wald DID on groups", "Wald DID on supergroups", "Wald CIC on supergroups"];

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64)
    } else {
        f64::NAN
    };
    (m, sd)
}

/// Summaries over completed simulations, in simulation order.
pub fn summarize(cfg: &SimConfig, outcomes: &[SimOutcome]) -> SimulationSummary {
    let done: Vec<&SimOutcome> = outcomes.iter().filter(|o| o.completed()).collect();
    let pick = |f: fn(&SimOutcome) -> Option<f64>| -> Vec<f64> { done.iter().map(|o| f(o).unwrap()).collect() };
    let series = [pick(|o| o.did_perfect), pick(|o| o.did_supergroups), pick(|o| o.cic)];
    let estimators = core::array::from_fn(|k| {
        let (mean, sd) = mean_sd(&series[k]);
        EstimatorSummary { name: ESTIMATOR_NAMES[k].into(), mean, sd }
    });
    let mut size_mean = [0.0; 3];
    let mut size_sd = [0.0; 3];
    for k in 0..3 {
        let v: Vec<f64> = done.iter().map(|o| o.sizes[k] as f64).collect();
        let (m, s) = mean_sd(&v);
        size_mean[k] = m;
        size_sd[k] = s;
    }
    SimulationSummary { config: *cfg, estimators, size_mean, size_sd, completed: done.len(), n_sims: outcomes.len() }
}

/// All simulations, sequentially.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let outcomes: Vec<SimOutcome> = (0..cfg.n_sims as u64).map(|i| simulate_one(cfg, i)).collect();
    Ok(summarize(cfg, &outcomes))
}
