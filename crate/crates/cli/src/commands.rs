//! End-to-end workflows behind each subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use didweak_core::cic::{self, CellLabels, CicBootstrapConfig};
use didweak_core::designs::{self, CohortFrame, DesignProduct};
use didweak_core::iv::{self, IvFitResult};
use didweak_core::weakiv::{self, ArProblem, ConfidenceSet};
use didweak_core::{wls_fit, Dataset, FitResult, ModelSpec};

use crate::csv_io::{self, format_number};
use crate::error::{CliError, Result};
use crate::parallel;
use crate::report::{self, RunReport};
use crate::spec_file::{Command, DesignKind, SpecFile};

#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub spec: PathBuf,
    pub seed: Option<u64>,
    /// Worker cap; 0 uses every core.
    pub threads: usize,
    pub out_dir: PathBuf,
}

/// Load, validate and run `cmd`, writing CSVs into `opts.out_dir`.
pub fn run(cmd: Command, opts: &Options) -> Result<RunReport> {
    let mut spec = SpecFile::load(&opts.spec)?;
    if let Some(seed) = opts.seed {
        spec.override_seed(seed);
    }
    spec.validate(cmd)?;
    let spec_dir = opts.spec.parent().map(Path::to_path_buf).unwrap_or_default();
    let data = match spec.data_path(&spec_dir) {
        Some(path) if cmd != Command::Simulate => {
            let header = csv_io::read_header(&path)?;
            spec.check_columns(cmd, &header)?;
            Some(csv_io::load_csv(&path, &spec.schema_hints(cmd))?)
        }
        _ => None,
    };
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;
    let mut report = RunReport::new(cmd.name(), spec.to_toml());
    let out = opts.out_dir.as_path();
    parallel::with_threads(opts.threads, || -> Result<()> {
        match cmd {
            Command::Fit => fit(&spec, data.as_ref().unwrap(), out, &mut report),
            Command::Iv => iv_cmd(&spec, data.as_ref().unwrap(), out, &mut report).map(|_| ()),
            Command::ArCurve => ar_curve(&spec, data.as_ref().unwrap(), out, &mut report),
            Command::Cic => cic_cmd(&spec, data.as_ref().unwrap(), out, &mut report),
            Command::Simulate => simulate(&spec, out, &mut report),
            Command::Horserace => horserace(&spec, data.as_ref().unwrap(), out, &mut report),
        }
    })??;
    Ok(report)
}

struct Prepared {
    data: Dataset,
    spec: ModelSpec,
    frame: Option<CohortFrame>,
    design: Option<DesignProduct>,
}

/// Apply the declared design. Generated columns named as instruments stay
/// excluded; the rest join the exogenous regressors.
fn prepare(spec: &SpecFile, data: &Dataset) -> Result<Prepared> {
    let mut model = spec.model_spec().expect("validated");
    let frame = spec.cohort_frame(data)?;
    let design = match &frame {
        Some(f) => spec.design_product(f)?,
        None => None,
    };
    let data = match &design {
        Some(d) => {
            for name in d.all_names() {
                if !model.instruments.contains(&name) && !model.exog.contains(&name) {
                    model.exog.push(name);
                }
            }
            d.apply(data)?
        }
        None => data.clone(),
    };
    for name in &model.instruments {
        if !data.has(name) {
            return Err(CliError::validation("model.instruments", format!("column `{name}` is neither in the data nor generated by the design")));
        }
    }
    Ok(Prepared { data, spec: model, frame, design })
}

fn coefficients(report: &mut RunReport, out: &Path, title: &str, fit: &FitResult) -> Result<()> {
    report.section(title, report::coefficient_table(fit));
    report.emit(out, "coefficients.csv", &report::COEFFICIENT_HEADER, &report::coefficient_rows(fit))
}

fn diagnostics(spec: &SpecFile, raw: &Dataset, p: &Prepared, fit: &FitResult, report: &mut RunReport, out: &Path) -> Result<()> {
    let mut body = String::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut add = |body: &mut String, name: &str, value: f64| {
        let _ = writeln!(body, "{name:<36}{value:>14.6}");
        rows.push(vec![name.into(), format_number(value)]);
    };
    if let (Some(d), Some(DesignKind::Spline | DesignKind::Omnibus)) = (&spec.design, spec.design.as_ref().and_then(|d| d.kind)) {
        let tb = designs::trend_break_impact(fit, designs::SPLINE, d.horizon)?;
        add(&mut body, "trend break tau", tb.tau);
        add(&mut body, "trend break se", tb.se);
        add(&mut body, "trend break t", tb.t);
    }
    let diag = spec.diagnostics.clone().unwrap_or_default();
    if diag.placebo_equality {
        let frame = p.frame.as_ref().ok_or_else(|| CliError::validation("diagnostics.placebo_equality", "needs a [design] section"))?;
        let base = spec.model_spec().unwrap();
        let pe = designs::placebo_equality_test(raw, frame, &base, spec.wald_reference())?;
        add(&mut body, "experiment D x T", pe.experiment);
        add(&mut body, "placebo D x T", pe.placebo);
        add(&mut body, "placebo equality p", pe.test.p);
    }
    if let Some(w) = &diag.weight_endogeneity {
        let wt = designs::weight_endogeneity_test(&p.data, &p.spec, w)?;
        add(&mut body, "weight endogeneity t", wt.t_stat);
        add(&mut body, "weight endogeneity p", wt.p);
    }
    if !body.is_empty() {
        report.section("diagnostics", body);
        report.emit(out, "diagnostics.csv", &["quantity", "value"], &rows)?;
    }
    Ok(())
}

fn fit(spec: &SpecFile, data: &Dataset, out: &Path, report: &mut RunReport) -> Result<()> {
    let p = prepare(spec, data)?;
    if let Some(d) = &p.design {
        report.section("design", design_summary(d, p.data.n_rows()));
    }
    let fit = wls_fit(&p.data, &p.spec)?;
    coefficients(report, out, "coefficients", &fit)?;
    diagnostics(spec, data, &p, &fit, report, out)
}

fn design_summary(d: &DesignProduct, rows: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "generated columns: {}", d.all_names().join(", "));
    let _ = writeln!(s, "rows in estimation sample: {rows}");
    s
}

fn iv_cmd(spec: &SpecFile, data: &Dataset, out: &Path, report: &mut RunReport) -> Result<(Prepared, IvFitResult)> {
    let p = prepare(spec, data)?;
    if let Some(d) = &p.design {
        report.section("design", design_summary(d, p.data.n_rows()));
    }
    let fit = iv::tsls_fit(&p.data, &p.spec)?;
    coefficients(report, out, "second stage", &fit.fit)?;
    let mut body = String::new();
    let _ = writeln!(body, "excluded instruments: {}", fit.instruments.join(", "));
    match fit.kp_f {
        Some(f) => {
            let _ = writeln!(body, "{:<36}{:>14.6}", "Kleibergen-Paap F", f);
        }
        None => body.push_str("Kleibergen-Paap F: not computed (several endogenous regressors)\n"),
    }
    if let Some(j) = fit.hansen_j {
        let _ = writeln!(body, "{:<36}{:>14.6}", "Hansen J", j.statistic);
        let _ = writeln!(body, "{:<36}{:>14.6}", format!("Hansen J p (dof {})", j.dof), j.p);
    }
    report.section("instrument diagnostics", body);
    Ok((p, fit))
}

fn ar_curve(spec: &SpecFile, data: &Dataset, out: &Path, report: &mut RunReport) -> Result<()> {
    let (p, fit) = iv_cmd(spec, data, out, report)?;
    let b = spec.bootstrap.as_ref().unwrap();
    let cfg = spec.bootstrap_config().unwrap();
    let grid = b.grid.clone().unwrap_or_else(|| weakiv::default_grid(&fit, b.grid_points, b.grid_width));
    let problem = ArProblem::new(&p.data, &p.spec)?;
    let enumerated = cfg.enumerates(problem.n_clusters())?;
    let curve = parallel::confidence_curve(&problem, &grid, &cfg)?;
    let mut sets: Vec<ConfidenceSet> = Vec::new();
    for &level in &b.levels {
        let mut refine = |beta: f64| parallel::p_at(&problem, beta, &cfg).map_err(|e| match e {
            CliError::Core(c) => c,
            other => didweak_core::Error::InvalidArgument(other.to_string()),
        });
        sets.push(weakiv::extract_confidence_set(&curve, level, Some(&mut refine))?);
    }
    let mut body = String::new();
    let draws = if enumerated {
        format!("all {} sign patterns enumerated", 1u64 << problem.n_clusters())
    } else {
        format!("{} Rademacher replications, seed {}", cfg.replications, cfg.seed)
    };
    let _ = writeln!(body, "clusters: {}  bootstrap: {draws}", problem.n_clusters());
    let _ = writeln!(body, "grid: {} points over [{:.6}, {:.6}]", grid.len(), grid[0], grid[grid.len() - 1]);
    body.push_str(&report::confidence_sets(&sets));
    report.section("Anderson-Rubin confidence sets", body);
    report.emit(out, "confidence_curve.csv", &["trial_value", "p"], &report::curve_rows(&curve))?;
    let rows: Vec<Vec<String>> = sets.iter().map(|s| vec![format_number(s.level), s.to_string()]).collect();
    report.emit(out, "confidence_sets.csv", &["level", "set"], &rows)
}

fn cic_cmd(spec: &SpecFile, data: &Dataset, out: &Path, report: &mut RunReport) -> Result<()> {
    let c = spec.cic.as_ref().unwrap();
    let labels = CellLabels { group: c.group.clone(), period: c.period.clone(), weights: c.weights.clone(), cluster: c.cluster.clone() };
    let covs: Vec<&str> = c.covariates.iter().map(String::as_str).collect();
    let cells = cic::covariate_adjusted_cells(data, &c.outcome, &covs, &labels)?;
    let cfg = CicBootstrapConfig { replications: c.replications, seed: c.seed.unwrap(), level: c.level, policy: c.support.into() };
    let pct = spec.percentiles();
    let (curve, cvm) = parallel::cic_bootstrap(&cells, &pct, &cfg)?;
    let mut body = String::new();
    let sizes = [&cells.control_pre, &cells.control_post, &cells.treated_pre, &cells.treated_post].map(|s| s.len());
    let _ = writeln!(body, "cell sizes (control pre/post, treated pre/post): {} / {} / {} / {}", sizes[0], sizes[1], sizes[2], sizes[3]);
    if !covs.is_empty() {
        let _ = writeln!(body, "outcome adjusted for: {}", covs.join(", "));
    }
    let _ = writeln!(body, "{:.0}% percentile intervals from {} resamples, seed {}", 100.0 * c.level, c.replications, cfg.seed);
    body.push_str(&report::quantile_table(&curve));
    report.section("changes-in-changes quantile effects", body);
    report.section("Cramer-von Mises tests", report::cvm_table(&cvm));
    report.emit(out, "quantile_effects.csv", &["percentile", "effect", "lo", "hi"], &report::quantile_rows(&curve))?;
    let rows: Vec<Vec<String>> = report::cvm_entries(&cvm).iter().map(|(n, t, p)| vec![(*n).into(), format_number(*t), format_number(*p)]).collect();
    report.emit(out, "cvm_tests.csv", &["null", "statistic", "p"], &rows)
}

fn simulate(spec: &SpecFile, out: &Path, report: &mut RunReport) -> Result<()> {
    let s = spec.simulate.as_ref().unwrap();
    let seed = s.seed.unwrap();
    let summaries = s
        .rho
        .values()
        .into_iter()
        .map(|rho| parallel::run_simulation(&spec.sim_config(s, rho, seed)))
        .collect::<Result<Vec<_>>>()?;
    report.section("average supergroup size and point estimates (SD)", report::simulation_table(&summaries));
    report.emit(out, "simulation_summary.csv", &report::SIMULATION_HEADER, &report::simulation_rows(&summaries))
}

fn horserace(spec: &SpecFile, data: &Dataset, out: &Path, report: &mut RunReport) -> Result<()> {
    let d = spec.design.as_ref().unwrap();
    let model = spec.model_spec().unwrap();
    let frame = spec.cohort_frame(data)?.unwrap();
    let h = designs::horserace(data, &frame, &model, d.kink, spec.wald_reference())?;
    coefficients(report, out, "omnibus regression", &h.fit)?;
    let mut body = String::new();
    let _ = writeln!(body, "{:<36}{:>14.6}", format!("spline term p (kink {})", d.kink), h.p_kink);
    let _ = writeln!(body, "{:<36}{:>14.6}", "quadratic term p", h.p_quadratic);
    report.section("horserace", body);
    let row = |term: &str, p: f64| vec![term.into(), format_number(h.fit.coef(term).unwrap()), format_number(h.fit.se(term).unwrap()), format_number(p)];
    let rows = vec![row(designs::SPLINE, h.p_kink), row(designs::TREND_SQ, h.p_quadratic)];
    report.emit(out, "horserace.csv", &["term", "coefficient", "se", "p"], &rows)
}
