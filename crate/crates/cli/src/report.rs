//! Text reports and the CSV tables written beside them.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use didweak_core::cic::{CvmResult, QuantileEffectCurve};
use didweak_core::sim::SimulationSummary;
use didweak_core::weakiv::{ConfidenceCurve, ConfidenceSet};
use didweak_core::FitResult;

use crate::csv_io::{format_number, write_table};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub title: String,
    pub body: String,
}

/// Everything a run prints: the resolved spec, result sections and the
/// CSV files written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub spec_echo: String,
    pub sections: Vec<Section>,
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(command: &str, spec_echo: String) -> Self {
        RunReport { command: command.into(), spec_echo, sections: Vec::new(), outputs: Vec::new() }
    }

    pub fn section(&mut self, title: impl Into<String>, body: String) {
        self.sections.push(Section { title: title.into(), body });
    }

    /// Write a CSV into `dir` and record it.
    pub fn emit(&mut self, dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = dir.join(name);
        write_table(&path, header, rows)?;
        self.outputs.push(path);
        Ok(())
    }
}

fn rule(f: &mut fmt::Formatter<'_>, title: &str) -> fmt::Result {
    writeln!(f, "== {title} ==")
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "didweak {}", self.command)?;
        writeln!(f)?;
        rule(f, "resolved spec")?;
        write!(f, "{}", self.spec_echo)?;
        if !self.spec_echo.ends_with('\n') {
            writeln!(f)?;
        }
        for s in &self.sections {
            writeln!(f)?;
            rule(f, &s.title)?;
            write!(f, "{}", s.body)?;
        }
        if !self.outputs.is_empty() {
            writeln!(f)?;
            rule(f, "outputs")?;
            for p in &self.outputs {
                writeln!(f, "{}", p.display())?;
            }
        }
        Ok(())
    }
}

pub fn coefficient_table(fit: &FitResult) -> String {
    let mut s = format!("{:<24}{:>14}{:>14}{:>10}{:>10}\n", "term", "estimate", "cluster SE", "t", "p");
    for name in &fit.names {
        let _ = writeln!(
            s,
            "{:<24}{:>14.6}{:>14.6}{:>10.3}{:>10.4}",
            name,
            fit.coef(name).unwrap(),
            fit.se(name).unwrap(),
            fit.t_stat(name).unwrap(),
            fit.p_value(name).unwrap()
        );
    }
    let _ = writeln!(s, "observations: {}  clusters: {}  residual dof: {}", fit.n_obs, fit.n_clusters, fit.dof_residual);
    if !fit.dropped_collinear.is_empty() {
        let _ = writeln!(s, "dropped as collinear: {}", fit.dropped_collinear.join(", "));
    }
    s
}

pub fn coefficient_rows(fit: &FitResult) -> Vec<Vec<String>> {
    fit.names
        .iter()
        .map(|n| {
            vec![
                n.clone(),
                format_number(fit.coef(n).unwrap()),
                format_number(fit.se(n).unwrap()),
                format_number(fit.t_stat(n).unwrap()),
                format_number(fit.p_value(n).unwrap()),
            ]
        })
        .collect()
}

pub const COEFFICIENT_HEADER: [&str; 5] = ["term", "estimate", "se", "t", "p"];

pub fn curve_rows(curve: &ConfidenceCurve) -> Vec<Vec<String>> {
    curve.trial_values.iter().zip(&curve.p_values).map(|(b, p)| vec![format_number(*b), format_number(*p)]).collect()
}

pub fn confidence_sets(sets: &[ConfidenceSet]) -> String {
    let mut s = String::new();
    for set in sets {
        let _ = writeln!(s, "{:>5.1}%  {:.4}", 100.0 * set.level, set);
    }
    s
}

pub fn quantile_table(curve: &QuantileEffectCurve) -> String {
    let mut s = format!("{:>10}{:>14}{:>14}{:>14}\n", "percentile", "effect", "lower", "upper");
    for (k, q) in curve.percentiles.iter().enumerate() {
        let lo = curve.ci_lower.as_ref().map_or(f64::NAN, |v| v[k]);
        let hi = curve.ci_upper.as_ref().map_or(f64::NAN, |v| v[k]);
        let _ = writeln!(s, "{:>10.2}{:>14.6}{:>14.6}{:>14.6}", q, curve.effects[k], lo, hi);
    }
    s
}

pub fn quantile_rows(curve: &QuantileEffectCurve) -> Vec<Vec<String>> {
    (0..curve.percentiles.len())
        .map(|k| {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map_or(String::new(), |v| format_number(v[k]));
            vec![format_number(curve.percentiles[k]), format_number(curve.effects[k]), opt(&curve.ci_lower), opt(&curve.ci_upper)]
        })
        .collect()
}

pub fn cvm_table(c: &CvmResult) -> String {
    let mut s = format!("{:<22}{:>14}{:>10}\n", "null", "statistic", "p");
    for (name, t, p) in cvm_entries(c) {
        let _ = writeln!(s, "{:<22}{:>14.6}{:>10.4}", name, t, p);
    }
    let _ = writeln!(s, "feasible replications: {}  infeasible: {}", c.replications, c.failed);
    s
}

pub fn cvm_entries(c: &CvmResult) -> [(&'static str, f64, f64); 3] {
    [
        ("no effect", c.t_no_effect, c.p_no_effect),
        ("all effects positive", c.t_all_positive, c.p_all_positive),
        ("all effects negative", c.t_all_negative, c.p_all_negative),
    ]
}

const SIZE_LABELS: [&str; 3] = ["Decreasing", "Flat", "Increasing"];

fn cell(mean: f64, sd: f64, digits: usize) -> String {
    format!("{mean:.digits$} ({sd:.digits$})")
}

/// Average supergroup sizes and point estimates (SD in parentheses), one
/// column per simulation configuration.
pub fn simulation_table(summaries: &[SimulationSummary]) -> String {
    let width = 22;
    let mut s = format!("{:<28}", "");
    for sm in summaries {
        let _ = write!(s, "{:>width$}", format!("rho = {}", sm.config.rho));
    }
    s.push('\n');
    s.push_str("Average supergroup size\n");
    for k in 0..3 {
        let _ = write!(s, "{:<28}", format!("  {}", SIZE_LABELS[k]));
        for sm in summaries {
            let _ = write!(s, "{:>width$}", cell(sm.size_mean[k], sm.size_sd[k], 2));
        }
        s.push('\n');
    }
    s.push_str("Point estimates\n");
    for k in 0..3 {
        let _ = write!(s, "{:<28}", format!("  {}", summaries[0].estimators[k].name));
        for sm in summaries {
            let e = &sm.estimators[k];
            let _ = write!(s, "{:>width$}", cell(e.mean, e.sd, 4));
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<28}", "Simulations completed");
    for sm in summaries {
        let _ = write!(s, "{:>width$}", format!("{} / {}", sm.completed, sm.n_sims));
    }
    s.push('\n');
    s
}

pub fn simulation_rows(summaries: &[SimulationSummary]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for sm in summaries {
        let rho = format_number(sm.config.rho);
        for k in 0..3 {
            rows.push(vec![rho.clone(), format!("size_{}", SIZE_LABELS[k].to_lowercase()), format_number(sm.size_mean[k]), format_number(sm.size_sd[k]), sm.completed.to_string()]);
        }
        for e in &sm.estimators {
            rows.push(vec![rho.clone(), e.name.clone(), format_number(e.mean), format_number(e.sd), sm.completed.to_string()]);
        }
    }
    rows
}

pub const SIMULATION_HEADER: [&str; 5] = ["rho", "quantity", "mean", "sd", "completed"];
