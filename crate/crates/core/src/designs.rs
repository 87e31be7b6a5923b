//! Cohort-by-intensity regressor construction for DID designs and the
//! headline quantities computed from them.
//!
//! Generated columns are interactions of a group-level treatment intensity
//! `D` with functions of age at baseline: a young-block dummy, cohort
//! dummies, a linear trend, its square, and the spline `max(0, kink - age)`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Categorical, Column, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::ols::{self, FitResult};
use crate::wald::{self, WaldReference, WaldResult};

pub const DEFAULT_YOUNG: (i64, i64) = (2, 6);
pub const DEFAULT_OLD: (i64, i64) = (12, 17);
pub const PLACEBO_YOUNG: (i64, i64) = (12, 17);
pub const PLACEBO_OLD: (i64, i64) = (18, 24);
pub const DEFAULT_KINK: i64 = 12;
pub const DEFAULT_HORIZON: u32 = 10;

pub const INTEREST: &str = "D_x_T";
pub const TREND: &str = "D_x_t";
pub const TREND_SQ: &str = "D_x_t2";
pub const SPLINE: &str = "D_x_spline";

/// Cohort-level inputs for design construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortFrame {
    pub age: Vec<i64>,
    pub intensity: Vec<f64>,
    pub group: Categorical,
    pub young_range: (i64, i64),
    pub old_range: (i64, i64),
}

fn in_range(a: i64, r: (i64, i64)) -> bool {
    r.0 <= a && a <= r.1
}

impl CohortFrame {
    pub fn new(age: Vec<i64>, intensity: Vec<f64>, group: Categorical, young_range: (i64, i64), old_range: (i64, i64)) -> Result<Self> {
        let n = age.len();
        for (name, len) in [("intensity", intensity.len()), ("group", group.len())] {
            if len != n {
                return Err(Error::LengthMismatch { name: name.into(), expected: n, found: len });
            }
        }
        for r in [young_range, old_range] {
            if r.0 > r.1 {
                return Err(Error::InvalidArgument(format!("empty age range [{}, {}]", r.0, r.1)));
            }
        }
        if young_range.0 <= old_range.1 && old_range.0 <= young_range.1 {
            return Err(Error::InvalidArgument("young and old ranges overlap".into()));
        }
        if let Some(row) = intensity.iter().position(|d| !d.is_finite()) {
            return Err(Error::NonFinite { name: "intensity".into(), row });
        }
        let mut first: Vec<Option<f64>> = vec![None; group.n_levels()];
        for (i, &g) in group.codes.iter().enumerate() {
            match first[g as usize] {
                None => first[g as usize] = Some(intensity[i]),
                Some(d) if d != intensity[i] => {
                    return Err(Error::InvalidArgument(format!(
                        "treatment intensity varies within group `{}`",
                        group.levels[g as usize]
                    )))
                }
                _ => {}
            }
        }
        Ok(CohortFrame { age, intensity, group, young_range, old_range })
    }

    /// Integer-valued age column, numeric intensity column and group column.
    pub fn from_dataset(data: &Dataset, age: &str, intensity: &str, group: &str, young_range: (i64, i64), old_range: (i64, i64)) -> Result<Self> {
        let a = data.finite(age)?;
        let mut ages = Vec::with_capacity(a.len());
        for (row, &x) in a.iter().enumerate() {
            if libm::trunc(x) != x {
                return Err(Error::ColumnType { name: format!("{age} (row {row})"), expected: "integer-valued", found: "numeric" });
            }
            ages.push(x as i64);
        }
        Self::new(ages, data.finite(intensity)?.to_vec(), data.codes(group)?, young_range, old_range)
    }

    pub fn len(&self) -> usize {
        self.age.len()
    }

    pub fn is_empty(&self) -> bool {
        self.age.is_empty()
    }

    pub fn with_ranges(&self, young_range: (i64, i64), old_range: (i64, i64)) -> Result<Self> {
        Self::new(self.age.clone(), self.intensity.clone(), self.group.clone(), young_range, old_range)
    }

    fn distinct_ages(&self) -> Vec<i64> {
        self.age.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    fn interact(&self, f: impl Fn(i64) -> f64) -> Vec<f64> {
        self.age.iter().zip(&self.intensity).map(|(&a, &d)| d * f(a)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Interest,
    Instrument,
    Control,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignColumn {
    pub name: String,
    pub values: Vec<f64>,
    pub role: Role,
}

/// Generated columns plus an optional row filter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DesignProduct {
    pub columns: Vec<DesignColumn>,
    pub filter: Option<Vec<bool>>,
}

impl DesignProduct {
    fn push(&mut self, name: impl Into<String>, values: Vec<f64>, role: Role) {
        self.columns.push(DesignColumn { name: name.into(), values, role });
    }

    pub fn names(&self, role: Role) -> Vec<String> {
        self.columns.iter().filter(|c| c.role == role).map(|c| c.name.clone()).collect()
    }

    pub fn all_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Merge another product's columns; filters are combined with AND.
    pub fn extend(&mut self, other: DesignProduct) {
        self.columns.extend(other.columns);
        self.filter = match (self.filter.take(), other.filter) {
            (Some(a), Some(b)) => Some(a.iter().zip(&b).map(|(x, y)| *x && *y).collect()),
            (a, b) => a.or(b),
        };
    }

    /// Append the columns (rejecting name collisions) and apply the filter.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let mut out = data.clone();
        for c in &self.columns {
            out.push(c.name.clone(), Column::Numeric(c.values.clone()))?;
        }
        match &self.filter {
            Some(f) => out.filter(f),
            None => Ok(out),
        }
    }

    pub fn filtered_rows(&self) -> Option<usize> {
        self.filter.as_ref().map(|f| f.iter().filter(|&&b| b).count())
    }
}

fn block_design(frame: &CohortFrame) -> Result<DesignProduct> {
    let (y, o) = (frame.young_range, frame.old_range);
    if !frame.age.iter().any(|&a| in_range(a, y)) {
        return Err(Error::EmptySample("no rows in the young range"));
    }
    if !frame.age.iter().any(|&a| in_range(a, o)) {
        return Err(Error::EmptySample("no rows in the old range"));
    }
    let mut p = DesignProduct::default();
    p.push(INTEREST, frame.interact(|a| if in_range(a, y) { 1.0 } else { 0.0 }), Role::Interest);
    p.filter = Some(frame.age.iter().map(|&a| in_range(a, y) || in_range(a, o)).collect());
    Ok(p)
}

/// `D * T` with `T` the young-block dummy, restricted to the two blocks.
pub fn build_young_old(frame: &CohortFrame) -> Result<DesignProduct> {
    block_design(frame)
}

/// The young/old design shifted to the placebo blocks.
pub fn build_placebo(frame: &CohortFrame) -> Result<DesignProduct> {
    block_design(&frame.with_ranges(PLACEBO_YOUNG, PLACEBO_OLD)?)
}

pub fn cohort_column(age: i64) -> String {
    format!("D_x_age{age}")
}

pub fn pooled_column(from: i64) -> String {
    format!("D_x_age{from}plus")
}

/// `D` times a dummy for each age below `pooled_old_from`, except the
/// youngest age (the reference), plus one pooled dummy for older ages.
/// With `pooled_old_from` above every age, all cohorts but the reference
/// get their own column.
pub fn build_by_cohort(frame: &CohortFrame, pooled_old_from: i64) -> Result<DesignProduct> {
    let ages = frame.distinct_ages();
    let reference = *ages.first().ok_or(Error::EmptySample("no rows"))?;
    build_by_cohort_with_reference(frame, pooled_old_from, reference)
}

pub fn build_by_cohort_with_reference(frame: &CohortFrame, pooled_old_from: i64, reference: i64) -> Result<DesignProduct> {
    let ages = frame.distinct_ages();
    if !ages.contains(&reference) {
        return Err(Error::InvalidArgument(format!("reference age {reference} not present")));
    }
    if reference >= pooled_old_from {
        return Err(Error::InvalidArgument("reference age must lie below the pooled block".into()));
    }
    let max = *ages.last().unwrap();
    let mut p = DesignProduct::default();
    for &a in ages.iter().filter(|&&a| a < pooled_old_from && a != reference) {
        p.push(cohort_column(a), frame.interact(|t| if t == a { 1.0 } else { 0.0 }), Role::Interest);
    }
    if pooled_old_from <= max {
        if !frame.age.iter().any(|&a| a >= pooled_old_from) {
            return Err(Error::EmptySample("no rows in the pooled block"));
        }
        p.push(
            pooled_column(pooled_old_from),
            frame.interact(|t| if t >= pooled_old_from { 1.0 } else { 0.0 }),
            Role::Interest,
        );
    }
    Ok(p)
}

/// `max(0, kink - age)`.
pub fn spline_term(age: i64, kink: i64) -> f64 {
    (kink - age).max(0) as f64
}

/// `D * t` (control) and `D * max(0, kink - t)` (interest).
pub fn build_spline(frame: &CohortFrame, kink: i64) -> DesignProduct {
    let mut p = DesignProduct::default();
    p.push(TREND, frame.interact(|a| a as f64), Role::Control);
    p.push(SPLINE, frame.interact(|a| spline_term(a, kink)), Role::Interest);
    p
}

/// `D * t` (control) and `D * t^2` (interest).
pub fn build_quadratic(frame: &CohortFrame) -> DesignProduct {
    let mut p = DesignProduct::default();
    p.push(TREND, frame.interact(|a| a as f64), Role::Control);
    p.push(TREND_SQ, frame.interact(|a| (a * a) as f64), Role::Interest);
    p
}

/// `D * t`, `D * t^2` and `D * max(0, kink - t)`.
pub fn build_omnibus(frame: &CohortFrame, kink: i64) -> DesignProduct {
    let mut p = build_quadratic(frame);
    p.push(SPLINE, frame.interact(|a| spline_term(a, kink)), Role::Interest);
    p
}

/// `covariate` times a dummy for each age except the youngest.
pub fn control_interactions(frame: &CohortFrame, covariate: &[f64], name: &str) -> Result<DesignProduct> {
    if covariate.len() != frame.len() {
        return Err(Error::LengthMismatch { name: name.into(), expected: frame.len(), found: covariate.len() });
    }
    let ages = frame.distinct_ages();
    let mut p = DesignProduct::default();
    for &a in ages.iter().skip(1) {
        let v = frame.age.iter().zip(covariate).map(|(&t, &c)| if t == a { c } else { 0.0 }).collect();
        p.push(format!("{name}_x_age{a}"), v, Role::Control);
    }
    Ok(p)
}

/// Impact implied by a spline fit over `horizon` years of exposure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendBreak {
    pub tau: f64,
    pub se: f64,
    pub t: f64,
}

impl TrendBreak {
    pub fn from_estimate(coefficient: f64, se: f64, horizon: u32) -> Self {
        let h = horizon as f64;
        TrendBreak { tau: h * coefficient, se: h * se, t: coefficient / se }
    }
}

pub fn trend_break_impact(fit: &FitResult, spline_column: &str, horizon: u32) -> Result<TrendBreak> {
    let b = fit.coef(spline_column).ok_or_else(|| Error::MissingColumn(spline_column.into()))?;
    let se = fit.se(spline_column).unwrap();
    Ok(TrendBreak::from_estimate(b, se, horizon))
}

#[derive(Debug, Clone)]
pub struct Horserace {
    pub p_kink: f64,
    pub p_quadratic: f64,
    pub fit: FitResult,
}

/// Omnibus regression of `spec` augmented with the trend, squared-trend
/// and spline interactions; Wald p values for the squared trend and the
/// spline separately.
pub fn horserace(data: &Dataset, frame: &CohortFrame, spec: &ModelSpec, kink: i64, reference: WaldReference) -> Result<Horserace> {
    let design = build_omnibus(frame, kink);
    let d = design.apply(data)?;
    let spec = ModelSpec { exog: spec.exog.iter().cloned().chain(design.all_names()).collect(), ..spec.clone() };
    let fit = ols::wls_fit(&d, &spec)?;
    for name in [TREND_SQ, SPLINE] {
        if fit.index(name).is_none() {
            return Err(Error::Collinear(name.into()));
        }
    }
    Ok(Horserace {
        p_kink: wald::wald_zero(&fit, &[SPLINE], reference)?.p,
        p_quadratic: wald::wald_zero(&fit, &[TREND_SQ], reference)?.p,
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTest {
    pub t_stat: f64,
    pub p: f64,
}

/// Unweighted refit of `spec` with the weight column added as a regressor.
pub fn weight_endogeneity_test(data: &Dataset, spec: &ModelSpec, weight_column: &str) -> Result<WeightTest> {
    if spec.exog.iter().chain(&spec.endog).chain(&spec.instruments).any(|c| c == weight_column) || spec.outcome == weight_column {
        return Err(Error::InvalidSpec(format!("`{weight_column}` is already in the model")));
    }
    let mut s = spec.clone();
    s.weights = None;
    s.exog.push(weight_column.into());
    let fit = if s.endog.is_empty() {
        ols::wls_fit(data, &s)?
    } else {
        crate::iv::tsls_fit(data, &s)?.fit
    };
    if fit.index(weight_column).is_none() {
        return Err(Error::Collinear(weight_column.into()));
    }
    Ok(WeightTest { t_stat: fit.t_stat(weight_column).unwrap(), p: fit.p_value(weight_column).unwrap() })
}

#[derive(Debug, Clone)]
pub struct PlaceboEquality {
    pub experiment: f64,
    pub placebo: f64,
    pub test: WaldResult,
    pub fit: FitResult,
}

pub const EXPERIMENT_COLUMN: &str = "D_x_T_experiment";
pub const PLACEBO_COLUMN: &str = "D_x_T_placebo";
const SAMPLE_COLUMN: &str = "_placebo_sample";

/// Stack the experiment and placebo samples (rows in both appear twice),
/// give every regressor and fixed effect a sample-specific version, and
/// test equality of the two `D * T` coefficients, clustering by `spec`'s
/// cluster (which should be the group).
pub fn placebo_equality_test(data: &Dataset, frame: &CohortFrame, spec: &ModelSpec, reference: WaldReference) -> Result<PlaceboEquality> {
    if frame.len() != data.n_rows() {
        return Err(Error::LengthMismatch { name: "cohort frame".into(), expected: data.n_rows(), found: frame.len() });
    }
    let exp = build_young_old(frame)?;
    let plc = build_placebo(frame)?;
    let part = |p: &DesignProduct, s: usize| -> Result<Dataset> {
        let mut d = data.clone();
        let dt = &p.columns[0].values;
        let zero = vec![0.0; data.n_rows()];
        let (e, q) = if s == 0 { (dt.clone(), zero) } else { (zero, dt.clone()) };
        d.push(EXPERIMENT_COLUMN, Column::Numeric(e))?;
        d.push(PLACEBO_COLUMN, Column::Numeric(q))?;
        d.push(SAMPLE_COLUMN, Column::Numeric(vec![s as f64; data.n_rows()]))?;
        d.filter(p.filter.as_ref().unwrap())
    };
    let mut stacked = part(&exp, 0)?.concat(&part(&plc, 1)?)?;
    let sample = stacked.numeric(SAMPLE_COLUMN)?.to_vec();
    let mut exog = vec![String::from(EXPERIMENT_COLUMN), String::from(PLACEBO_COLUMN)];
    for x in &spec.exog {
        let v = stacked.finite(x)?.to_vec();
        for s in 0..2 {
            let name = format!("{x}@{s}");
            let col = v.iter().zip(&sample).map(|(a, &k)| if k == s as f64 { *a } else { 0.0 }).collect();
            stacked.push(name.clone(), Column::Numeric(col))?;
            exog.push(name);
        }
    }
    let mut fes = Vec::new();
    for f in &spec.fixed_effects {
        let c = stacked.codes(f)?;
        let labels: Vec<String> = c.codes.iter().zip(&sample).map(|(&g, &s)| format!("{}@{}", c.levels[g as usize], s)).collect();
        let name = format!("{f}@sample");
        stacked.push(name.clone(), Column::Categorical(Categorical::from_labels(&labels)))?;
        fes.push(name);
    }
    if fes.is_empty() && spec.intercept {
        exog.push(SAMPLE_COLUMN.into());
    }
    let s = ModelSpec { exog, fixed_effects: fes, ..spec.clone() };
    let fit = ols::wls_fit(&stacked, &s)?;
    for name in [EXPERIMENT_COLUMN, PLACEBO_COLUMN] {
        if fit.index(name).is_none() {
            return Err(Error::Collinear(name.into()));
        }
    }
    let test = wald::wald_linear(&fit, &[vec![(EXPERIMENT_COLUMN, 1.0), (PLACEBO_COLUMN, -1.0)]], &[0.0], reference)?;
    Ok(PlaceboEquality {
        experiment: fit.coef(EXPERIMENT_COLUMN).unwrap(),
        placebo: fit.coef(PLACEBO_COLUMN).unwrap(),
        test,
        fit,
    })
}
