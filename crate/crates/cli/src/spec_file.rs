//! Declarative TOML run specifications.
//!
//! ```toml
//! [data]
//! path = "panel.csv"
//! categorical = ["region"]
//!
//! [model]
//! outcome = "school"
//! fixed_effects = ["region", "age"]
//! cluster = "region"
//!
//! [design]
//! kind = "young_old"
//! age = "age"
//! intensity = "intensity"
//! group = "region"
//! ```

use std::path::{Path, PathBuf};

use didweak_core::cic::{check_percentiles, default_percentiles, SupportPolicy};
use didweak_core::designs::{self, CohortFrame, DesignProduct};
use didweak_core::sim::{SimConfig, SupergroupTest};
use didweak_core::wald::WaldReference;
use didweak_core::weakiv::{check_grid, BootstrapConfig, BootstrapMode, DEFAULT_REPLICATIONS};
use didweak_core::{Dataset, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::csv_io::SchemaHints;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cic: Option<CicSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Relative paths resolve against the spec file's directory.
    pub path: PathBuf,
    #[serde(default)]
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub outcome: String,
    #[serde(default)]
    pub exog: Vec<String>,
    #[serde(default)]
    pub endog: Vec<String>,
    #[serde(default)]
    pub instruments: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub wald: WaldChoice,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaldChoice {
    #[default]
    #[serde(rename = "chi2")]
    ChiSquare,
    #[serde(rename = "f")]
    F,
}

impl From<WaldChoice> for WaldReference {
    fn from(w: WaldChoice) -> Self {
        match w {
            WaldChoice::ChiSquare => WaldReference::ChiSquare,
            WaldChoice::F => WaldReference::F,
        }
    }
}

impl From<WaldChoice> for SupergroupTest {
    fn from(w: WaldChoice) -> Self {
        match w {
            WaldChoice::ChiSquare => SupergroupTest::ChiSquare,
            WaldChoice::F => SupergroupTest::F,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    YoungOld,
    Placebo,
    ByCohort,
    Spline,
    Quadratic,
    Omnibus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<DesignKind>,
    pub age: String,
    pub intensity: String,
    pub group: String,
    #[serde(default = "young_default")]
    pub young: [i64; 2],
    #[serde(default = "old_default")]
    pub old: [i64; 2],
    #[serde(default = "kink_default")]
    pub kink: i64,
    #[serde(default = "horizon_default")]
    pub horizon: u32,
    /// First age pooled into a single interaction in `by_cohort`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled_old_from: Option<i64>,
    /// Omitted cohort in `by_cohort` (youngest by default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<i64>,
}

fn young_default() -> [i64; 2] {
    [designs::DEFAULT_YOUNG.0, designs::DEFAULT_YOUNG.1]
}
fn old_default() -> [i64; 2] {
    [designs::DEFAULT_OLD.0, designs::DEFAULT_OLD.1]
}
fn kink_default() -> i64 {
    designs::DEFAULT_KINK
}
fn horizon_default() -> u32 {
    designs::DEFAULT_HORIZON
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default)]
    pub placebo_equality: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_endogeneity: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    #[default]
    Auto,
    Random,
    Enumerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "reps_default")]
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: ModeChoice,
    /// Explicit trial values; otherwise `grid_points` values over the 2SLS
    /// estimate plus or minus `grid_width` classical SEs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "grid_points_default")]
    pub grid_points: usize,
    #[serde(default = "grid_width_default")]
    pub grid_width: f64,
    #[serde(default = "levels_default")]
    pub levels: Vec<f64>,
}

fn reps_default() -> u64 {
    DEFAULT_REPLICATIONS
}
fn grid_points_default() -> usize {
    201
}
fn grid_width_default() -> f64 {
    8.0
}
fn levels_default() -> Vec<f64> {
    vec![0.95]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    #[default]
    Error,
    Clip,
}

impl From<PolicyChoice> for SupportPolicy {
    fn from(p: PolicyChoice) -> Self {
        match p {
            PolicyChoice::Error => SupportPolicy::Error,
            PolicyChoice::Clip => SupportPolicy::Clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CicSection {
    pub outcome: String,
    /// 0/1 treated-group indicator.
    pub group: String,
    /// 0/1 post-period indicator.
    pub period: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentiles: Option<Vec<f64>>,
    #[serde(default = "cic_reps_default")]
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "level_default")]
    pub level: f64,
    #[serde(default)]
    pub support: PolicyChoice,
}

fn cic_reps_default() -> u64 {
    999
}
fn level_default() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "hundred")]
    pub n_groups: usize,
    #[serde(default = "hundred")]
    pub n_per_group: usize,
    #[serde(default = "rho_default")]
    pub rho: OneOrMany,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "hundred")]
    pub n_sims: usize,
    #[serde(default = "threshold_default")]
    pub p_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub test: WaldChoice,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            n_groups: 100,
            n_per_group: 100,
            rho: rho_default(),
            beta: 0.0,
            n_sims: 100,
            p_threshold: 0.5,
            seed: None,
            test: WaldChoice::ChiSquare,
        }
    }
}

fn hundred() -> usize {
    100
}
fn rho_default() -> OneOrMany {
    OneOrMany::Many(vec![0.0, 0.95])
}
fn threshold_default() -> f64 {
    0.5
}

/// Subcommands, for validation of the sections each one needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Iv,
    ArCurve,
    Cic,
    Simulate,
    Horserace,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Iv => "iv",
            Command::ArCurve => "ar-curve",
            Command::Cic => "cic",
            Command::Simulate => "simulate",
            Command::Horserace => "horserace",
        }
    }
}

fn missing(section: &str, cmd: Command) -> CliError {
    CliError::validation(section, format!("section required by `{}`", cmd.name()))
}

fn check_level(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CliError::validation(field, format!("must lie strictly between 0 and 1, got {v}")))
    }
}

fn check_names(field: &str, names: &[String]) -> Result<()> {
    for (i, n) in names.iter().enumerate() {
        if n.trim().is_empty() {
            return Err(CliError::validation(field, "column names must be non-empty"));
        }
        if names[..i].contains(n) {
            return Err(CliError::validation(field, format!("`{n}` is listed twice")));
        }
    }
    Ok(())
}

impl SpecFile {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse { source_name: source_name.into(), message: e.to_string() })
    }

    /// Read a spec file and resolve the data path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn data_path(&self, spec_dir: &Path) -> Option<PathBuf> {
        self.data.as_ref().map(|d| if d.path.is_absolute() { d.path.clone() } else { spec_dir.join(&d.path) })
    }

    /// Replace every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(b) = self.bootstrap.as_mut() {
            b.seed = Some(seed);
        }
        if let Some(c) = self.cic.as_mut() {
            c.seed = Some(seed);
        }
        if let Some(s) = self.simulate.as_mut() {
            s.seed = Some(seed);
        }
    }

    /// Structural checks that need no data. Every error names its field.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        if cmd != Command::Simulate && self.data.is_none() {
            return Err(missing("data", cmd));
        }
        if let Some(d) = &self.data {
            if d.path.as_os_str().is_empty() {
                return Err(CliError::validation("data.path", "must not be empty"));
            }
            check_names("data.categorical", &d.categorical)?;
        }
        if let Some(m) = &self.model {
            self.validate_model(m, cmd)?;
        }
        if let Some(d) = &self.design {
            if d.young[0] > d.young[1] {
                return Err(CliError::validation("design.young", "lower age exceeds upper age"));
            }
            if d.old[0] > d.old[1] {
                return Err(CliError::validation("design.old", "lower age exceeds upper age"));
            }
            if d.young[1] >= d.old[0] && d.old[1] >= d.young[0] {
                return Err(CliError::validation("design.old", "overlaps the young range"));
            }
            if d.horizon == 0 {
                return Err(CliError::validation("design.horizon", "must be at least 1"));
            }
            if matches!(cmd, Command::Fit | Command::Iv) && d.kind.is_none() {
                return Err(CliError::validation("design.kind", format!("required by `{}`", cmd.name())));
            }
        }
        if let Some(b) = &self.bootstrap {
            if b.replications == 0 {
                return Err(CliError::validation("bootstrap.replications", "must be at least 1"));
            }
            if let Some(g) = &b.grid {
                check_grid(g).map_err(|e| CliError::validation("bootstrap.grid", e.to_string()))?;
            }
            if b.grid_points < 2 {
                return Err(CliError::validation("bootstrap.grid_points", "must be at least 2"));
            }
            if !(b.grid_width.is_finite() && b.grid_width > 0.0) {
                return Err(CliError::validation("bootstrap.grid_width", "must be positive"));
            }
            if b.levels.is_empty() {
                return Err(CliError::validation("bootstrap.levels", "must list at least one level"));
            }
            for &l in &b.levels {
                check_level("bootstrap.levels", l)?;
            }
        }
        if let Some(c) = &self.cic {
            if c.replications == 0 {
                return Err(CliError::validation("cic.replications", "must be at least 1"));
            }
            check_level("cic.level", c.level)?;
            if let Some(p) = &c.percentiles {
                check_percentiles(p).map_err(|e| CliError::validation("cic.percentiles", e.to_string()))?;
            }
            check_names("cic.covariates", &c.covariates)?;
        }
        if let Some(s) = &self.simulate {
            let rhos = s.rho.values();
            if rhos.is_empty() {
                return Err(CliError::validation("simulate.rho", "must list at least one value"));
            }
            for (field, v) in [("simulate.n_groups", s.n_groups), ("simulate.n_per_group", s.n_per_group), ("simulate.n_sims", s.n_sims)] {
                if v == 0 {
                    return Err(CliError::validation(field, "must be at least 1"));
                }
            }
            if let Some(r) = rhos.iter().find(|r| !(r.abs() <= 1.0)) {
                return Err(CliError::validation("simulate.rho", format!("must lie in [-1, 1], got {r}")));
            }
            check_level("simulate.p_threshold", s.p_threshold)?;
            if !s.beta.is_finite() {
                return Err(CliError::validation("simulate.beta", "must be finite"));
            }
        }
        match cmd {
            Command::Fit | Command::Iv | Command::Horserace if self.model.is_none() => Err(missing("model", cmd)),
            Command::ArCurve => {
                if self.model.is_none() {
                    return Err(missing("model", cmd));
                }
                let b = self.bootstrap.as_ref().ok_or_else(|| missing("bootstrap", cmd))?;
                b.seed.ok_or_else(|| CliError::validation("bootstrap.seed", "a seed is required for the bootstrap (set it or pass --seed)"))?;
                Ok(())
            }
            Command::Horserace if self.design.is_none() => Err(missing("design", cmd)),
            Command::Cic => {
                let c = self.cic.as_ref().ok_or_else(|| missing("cic", cmd))?;
                c.seed.ok_or_else(|| CliError::validation("cic.seed", "a seed is required for the bootstrap (set it or pass --seed)"))?;
                Ok(())
            }
            Command::Simulate => {
                let s = self.simulate.as_ref().ok_or_else(|| missing("simulate", cmd))?;
                s.seed.ok_or_else(|| CliError::validation("simulate.seed", "a seed is required (set it or pass --seed)"))?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn validate_model(&self, m: &ModelSection, cmd: Command) -> Result<()> {
        if m.outcome.trim().is_empty() {
            return Err(CliError::validation("model.outcome", "must name a column"));
        }
        for (field, names) in [
            ("model.exog", &m.exog),
            ("model.endog", &m.endog),
            ("model.instruments", &m.instruments),
            ("model.fixed_effects", &m.fixed_effects),
        ] {
            check_names(field, names)?;
        }
        if !m.endog.is_empty() && m.instruments.is_empty() {
            return Err(CliError::validation("model.instruments", "endogenous regressors need at least one excluded instrument"));
        }
        if m.instruments.len() < m.endog.len() {
            return Err(CliError::validation("model.instruments", "fewer instruments than endogenous regressors"));
        }
        match cmd {
            Command::Fit | Command::Horserace if !m.endog.is_empty() => {
                Err(CliError::validation("model.endog", format!("`{}` fits by least squares; use `iv`", cmd.name())))
            }
            Command::Iv if m.endog.is_empty() => Err(CliError::validation("model.endog", "`iv` needs an endogenous regressor")),
            Command::ArCurve if m.endog.len() != 1 => Err(CliError::validation("model.endog", "`ar-curve` needs exactly one endogenous regressor")),
            _ => Ok(()),
        }
    }

    /// Columns referenced by the sections `cmd` uses, with their fields.
    /// Design-generated instrument names are excluded.
    pub fn referenced_columns(&self, cmd: Command) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut add = |field: &str, name: &str| {
            if !out.iter().any(|(_, n)| n == name) {
                out.push((field.into(), name.into()));
            }
        };
        let uses_model = matches!(cmd, Command::Fit | Command::Iv | Command::ArCurve | Command::Horserace);
        if let (true, Some(m)) = (uses_model, &self.model) {
            add("model.outcome", &m.outcome);
            m.exog.iter().for_each(|c| add("model.exog", c));
            m.endog.iter().for_each(|c| add("model.endog", c));
            m.fixed_effects.iter().for_each(|c| add("model.fixed_effects", c));
            if let Some(c) = &m.cluster {
                add("model.cluster", c);
            }
            if let Some(w) = &m.weights {
                add("model.weights", w);
            }
            if let Some(d) = &self.design {
                add("design.age", &d.age);
                add("design.intensity", &d.intensity);
                add("design.group", &d.group);
            }
            if let Some(w) = self.diagnostics.as_ref().and_then(|d| d.weight_endogeneity.as_ref()) {
                add("diagnostics.weight_endogeneity", w);
            }
        }
        if let (Command::Cic, Some(c)) = (cmd, &self.cic) {
            add("cic.outcome", &c.outcome);
            add("cic.group", &c.group);
            add("cic.period", &c.period);
            if let Some(w) = &c.weights {
                add("cic.weights", w);
            }
            if let Some(k) = &c.cluster {
                add("cic.cluster", k);
            }
            c.covariates.iter().for_each(|v| add("cic.covariates", v));
        }
        out
    }

    pub fn schema_hints(&self, cmd: Command) -> SchemaHints {
        SchemaHints {
            categorical: self.data.as_ref().map(|d| d.categorical.clone()).unwrap_or_default(),
            numeric: Vec::new(),
            required: self.referenced_columns(cmd).into_iter().map(|(_, n)| n).collect(),
        }
    }

    /// Check that every referenced column is in the file's header.
    pub fn check_columns(&self, cmd: Command, header: &[String]) -> Result<()> {
        for (field, name) in self.referenced_columns(cmd) {
            if !header.contains(&name) {
                return Err(CliError::validation(field, format!("column `{name}` not found in the data")));
            }
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Option<ModelSpec> {
        self.model.as_ref().map(|m| ModelSpec {
            outcome: m.outcome.clone(),
            exog: m.exog.clone(),
            endog: m.endog.clone(),
            instruments: m.instruments.clone(),
            fixed_effects: m.fixed_effects.clone(),
            cluster: m.cluster.clone(),
            weights: m.weights.clone(),
            intercept: m.intercept,
        })
    }

    pub fn wald_reference(&self) -> WaldReference {
        self.model.as_ref().map_or(WaldReference::ChiSquare, |m| m.wald.into())
    }

    pub fn cohort_frame(&self, data: &Dataset) -> Result<Option<CohortFrame>> {
        let Some(d) = &self.design else { return Ok(None) };
        let frame = CohortFrame::from_dataset(data, &d.age, &d.intensity, &d.group, (d.young[0], d.young[1]), (d.old[0], d.old[1]))?;
        Ok(Some(frame))
    }

    /// Generated columns for the declared design.
    pub fn design_product(&self, frame: &CohortFrame) -> Result<Option<DesignProduct>> {
        let Some(d) = &self.design else { return Ok(None) };
        let Some(kind) = d.kind else { return Ok(None) };
        let p = match kind {
            DesignKind::YoungOld => designs::build_young_old(frame)?,
            DesignKind::Placebo => designs::build_placebo(frame)?,
            DesignKind::ByCohort => {
                let pooled = d.pooled_old_from.unwrap_or(i64::MAX);
                match d.reference {
                    Some(r) => designs::build_by_cohort_with_reference(frame, pooled, r)?,
                    None => designs::build_by_cohort(frame, pooled)?,
                }
            }
            DesignKind::Spline => designs::build_spline(frame, d.kink),
            DesignKind::Quadratic => designs::build_quadratic(frame),
            DesignKind::Omnibus => designs::build_omnibus(frame, d.kink),
        };
        Ok(Some(p))
    }

    pub fn bootstrap_config(&self) -> Option<BootstrapConfig> {
        self.bootstrap.as_ref().map(|b| {
            let mode = match b.mode {
                ModeChoice::Auto => BootstrapMode::Auto,
                ModeChoice::Random => BootstrapMode::Random,
                ModeChoice::Enumerate => BootstrapMode::Enumerate,
            };
            BootstrapConfig::new(b.replications, b.seed.unwrap_or(0)).mode(mode)
        })
    }

    pub fn percentiles(&self) -> Vec<f64> {
        self.cic.as_ref().and_then(|c| c.percentiles.clone()).unwrap_or_else(default_percentiles)
    }

    pub fn sim_config(&self, s: &SimulateSection, rho: f64, seed: u64) -> SimConfig {
        SimConfig {
            n_groups: s.n_groups,
            n_per_group: s.n_per_group,
            rho,
            beta: s.beta,
            n_sims: s.n_sims,
            p_threshold: s.p_threshold,
            seed,
            test: s.test.into(),
        }
    }
}
