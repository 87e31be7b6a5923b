//! Rayon drivers for the stochastic procedures.
//!
//! Work is split into fixed index ranges whose results are combined in
//! index order, and every replication draws from its own `(seed, index)`
//! stream, so outputs do not depend on the number of threads.

use didweak_core::cic::{self, CellData, CicBootstrapConfig, CvmResult, QuantileEffectCurve};
use didweak_core::sim::{self, SimConfig, SimulationSummary};
use didweak_core::weakiv::{self, ArBootstrap, ArProblem, BootstrapConfig, BootstrapP, ConfidenceCurve};
use rayon::prelude::*;

use crate::error::{CliError, Result};

const CHUNK: u64 = 1024;

/// Run `f` on a pool capped at `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

fn chunks(total: u64) -> Vec<std::ops::Range<u64>> {
    (0..total.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(total)).collect()
}

pub fn bootstrap_p(boot: &ArBootstrap<'_>, cfg: &BootstrapConfig) -> Result<BootstrapP> {
    if cfg.enumerates(boot.n_clusters())? {
        let total = 1u64 << boot.n_clusters();
        let count: u64 = chunks(total).into_par_iter().map(|r| boot.count_enumerated(r)).sum();
        Ok(weakiv::finish_enumerated(boot.observed(), count, total))
    } else {
        if cfg.replications == 0 {
            return Err(didweak_core::Error::InvalidArgument("replications must be positive".into()).into());
        }
        let count: u64 = chunks(cfg.replications).into_par_iter().map(|r| boot.count_random(cfg.seed, r)).sum();
        Ok(weakiv::finish_random(boot.observed(), count, cfg.replications))
    }
}

pub fn p_at(problem: &ArProblem, beta0: f64, cfg: &BootstrapConfig) -> Result<f64> {
    Ok(bootstrap_p(&problem.bootstrap(beta0)?, cfg)?.p)
}

/// Confidence curve over `grid` with draws shared across grid points.
pub fn confidence_curve(problem: &ArProblem, grid: &[f64], cfg: &BootstrapConfig) -> Result<ConfidenceCurve> {
    weakiv::check_grid(grid)?;
    let p = grid.par_iter().map(|&b| p_at(problem, b, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(ConfidenceCurve::new(grid.to_vec(), p, cfg.replications, cfg.seed)?)
}

pub fn cic_bootstrap(cells: &CellData, percentiles: &[f64], cfg: &CicBootstrapConfig) -> Result<(QuantileEffectCurve, CvmResult)> {
    let mut curve = cic::cic_effects(cells, percentiles, cfg.policy)?;
    let results: Vec<Option<Vec<f64>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| cic::bootstrap_replicate(cells, percentiles, cfg.policy, cfg.seed, r))
        .collect();
    let (draws, failed) = cic::collect_draws(results);
    let cvm = cic::finish_bootstrap(&mut curve, &draws, failed, cfg)?;
    Ok((curve, cvm))
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let outcomes: Vec<_> = (0..cfg.n_sims as u64).into_par_iter().map(|i| sim::simulate_one(cfg, i)).collect();
    Ok(sim::summarize(cfg, &outcomes))
}
