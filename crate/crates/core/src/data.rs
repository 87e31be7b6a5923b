//! Columnar observation table and declarative model specification.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;
#[cfg(test)]
use alloc::vec;

use crate::error::{Error, Result};

/// Integer-coded categorical column. Codes index into `levels`, which are
/// kept in sorted order so that coding is independent of row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub codes: Vec<u32>,
    pub levels: Vec<String>,
}

impl Categorical {
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut map: BTreeMap<&str, u32> = BTreeMap::new();
        for l in labels {
            map.entry(l.as_ref()).or_insert(0);
        }
        for (i, v) in map.values_mut().enumerate() {
            *v = i as u32;
        }
        let codes = labels.iter().map(|l| map[l.as_ref()]).collect();
        let levels = map.keys().map(|k| (*k).to_owned()).collect();
        Categorical { codes, levels }
    }

    pub fn from_ints(values: &[i64]) -> Self {
        let mut map: BTreeMap<i64, u32> = BTreeMap::new();
        for &v in values {
            map.entry(v).or_insert(0);
        }
        for (i, v) in map.values_mut().enumerate() {
            *v = i as u32;
        }
        let codes = values.iter().map(|v| map[v]).collect();
        let levels = map.keys().map(|k| k.to_string()).collect();
        Categorical { codes, levels }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Categorical),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kind(&self) -> &'static str {
        match self {
            Column::Numeric(_) => "numeric",
            Column::Categorical(_) => "categorical",
        }
    }

    fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(c) => {
                let labels: Vec<&str> = rows
                    .iter()
                    .map(|&r| c.levels[c.codes[r] as usize].as_str())
                    .collect();
                Column::Categorical(Categorical::from_labels(&labels))
            }
        }
    }
}

/// Immutable-after-construction table of named, equal-length columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    n_rows: usize,
    names: Vec<String>,
    columns: Vec<Column>,
}

impl Dataset {
    pub fn new(n_rows: usize) -> Self {
        Dataset {
            n_rows,
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// Add a column; fails on a duplicate name or a length mismatch.
    pub fn push(&mut self, name: impl Into<String>, column: Column) -> Result<()> {
        let name = name.into();
        if self.has(&name) {
            return Err(Error::InvalidArgument(format!("duplicate column `{name}`")));
        }
        if column.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                name,
                expected: self.n_rows,
                found: column.len(),
            });
        }
        self.names.push(name);
        self.columns.push(column);
        Ok(())
    }

    /// Add or overwrite a numeric column.
    pub fn set_numeric(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if let Some(i) = self.names.iter().position(|n| *n == name) {
            if values.len() != self.n_rows {
                return Err(Error::LengthMismatch {
                    name,
                    expected: self.n_rows,
                    found: values.len(),
                });
            }
            self.columns[i] = Column::Numeric(values);
            Ok(())
        } else {
            self.push(name, Column::Numeric(values))
        }
    }

    pub fn with_numeric(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.push(name, Column::Numeric(values))?;
        Ok(self)
    }

    pub fn with_categorical<S: AsRef<str>>(
        mut self,
        name: impl Into<String>,
        labels: &[S],
    ) -> Result<Self> {
        self.push(name, Column::Categorical(Categorical::from_labels(labels)))?;
        Ok(self)
    }

    pub fn with_codes(mut self, name: impl Into<String>, values: &[i64]) -> Result<Self> {
        self.push(name, Column::Categorical(Categorical::from_ints(values)))?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            other => Err(Error::ColumnType {
                name: name.to_owned(),
                expected: "numeric",
                found: other.kind(),
            }),
        }
    }

    /// Numeric column checked for finiteness.
    pub fn finite(&self, name: &str) -> Result<&[f64]> {
        let v = self.numeric(name)?;
        if let Some(row) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                name: name.to_owned(),
                row,
            });
        }
        Ok(v)
    }

    /// Category codes for `name`. Numeric columns holding only integers are
    /// accepted and coded by sorted distinct value.
    pub fn codes(&self, name: &str) -> Result<Categorical> {
        match self.column(name)? {
            Column::Categorical(c) => Ok(c.clone()),
            Column::Numeric(v) => {
                let mut ints = Vec::with_capacity(v.len());
                for (row, &x) in v.iter().enumerate() {
                    if !x.is_finite() || libm::trunc(x) != x || libm::fabs(x) > 9.0e15 {
                        return Err(Error::ColumnType {
                            name: format!("{name} (row {row})"),
                            expected: "categorical or integer-valued",
                            found: "numeric",
                        });
                    }
                    ints.push(x as i64);
                }
                Ok(Categorical::from_ints(&ints))
            }
        }
    }

    /// Keep rows where `keep` is true.
    pub fn filter(&self, keep: &[bool]) -> Result<Dataset> {
        if keep.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                name: "row filter".into(),
                expected: self.n_rows,
                found: keep.len(),
            });
        }
        let rows: Vec<usize> = (0..self.n_rows).filter(|&i| keep[i]).collect();
        Ok(self.take(&rows))
    }

    /// Rows in the order given (repeats allowed).
    pub fn take(&self, rows: &[usize]) -> Dataset {
        Dataset {
            n_rows: rows.len(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
        }
    }

    /// Row-wise concatenation of two tables with identical column sets.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let mut out = Dataset::new(self.n_rows + other.n_rows);
        for (name, col) in self.names.iter().zip(&self.columns) {
            let rhs = other.column(name)?;
            let joined = match (col, rhs) {
                (Column::Numeric(a), Column::Numeric(b)) => {
                    let mut v = a.clone();
                    v.extend_from_slice(b);
                    Column::Numeric(v)
                }
                (Column::Categorical(a), Column::Categorical(b)) => {
                    let labels: Vec<&str> = a
                        .codes
                        .iter()
                        .map(|&c| a.levels[c as usize].as_str())
                        .chain(b.codes.iter().map(|&c| b.levels[c as usize].as_str()))
                        .collect();
                    Column::Categorical(Categorical::from_labels(&labels))
                }
                _ => {
                    return Err(Error::ColumnType {
                        name: name.clone(),
                        expected: col.kind(),
                        found: rhs.kind(),
                    })
                }
            };
            out.push(name.clone(), joined)?;
        }
        Ok(out)
    }
}

/// Declarative description of one regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub outcome: String,
    pub exog: Vec<String>,
    pub endog: Vec<String>,
    pub instruments: Vec<String>,
    pub fixed_effects: Vec<String>,
    pub cluster: Option<String>,
    pub weights: Option<String>,
    /// Add a constant when no fixed effects are absorbed.
    pub intercept: bool,
}

pub(crate) const INTERCEPT: &str = "_cons";

fn owned<I, S>(items: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    items.into_iter().map(|s| s.as_ref().to_owned()).collect()
}

impl ModelSpec {
    pub fn new(outcome: impl Into<String>) -> Self {
        ModelSpec {
            outcome: outcome.into(),
            exog: Vec::new(),
            endog: Vec::new(),
            instruments: Vec::new(),
            fixed_effects: Vec::new(),
            cluster: None,
            weights: None,
            intercept: true,
        }
    }

    pub fn exog<I: IntoIterator<Item = S>, S: AsRef<str>>(mut self, cols: I) -> Self {
        self.exog = owned(cols);
        self
    }

    pub fn endog<I: IntoIterator<Item = S>, S: AsRef<str>>(mut self, cols: I) -> Self {
        self.endog = owned(cols);
        self
    }

    pub fn instruments<I: IntoIterator<Item = S>, S: AsRef<str>>(mut self, cols: I) -> Self {
        self.instruments = owned(cols);
        self
    }

    pub fn fixed_effects<I: IntoIterator<Item = S>, S: AsRef<str>>(mut self, cols: I) -> Self {
        self.fixed_effects = owned(cols);
        self
    }

    pub fn cluster(mut self, col: impl Into<String>) -> Self {
        self.cluster = Some(col.into());
        self
    }

    pub fn weights(mut self, col: impl Into<String>) -> Self {
        self.weights = Some(col.into());
        self
    }

    pub fn no_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    /// Whether a constant column is added to the exogenous regressors.
    pub fn has_intercept(&self) -> bool {
        self.intercept && self.fixed_effects.is_empty()
    }

    /// Structural checks plus name resolution against `data`.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if !self.endog.is_empty() && self.instruments.len() < self.endog.len() {
            return Err(Error::InvalidSpec(format!(
                "{} endogenous regressor(s) but only {} instrument(s)",
                self.endog.len(),
                self.instruments.len()
            )));
        }
        if self.endog.is_empty() && !self.instruments.is_empty() {
            return Err(Error::InvalidSpec(
                "instruments given without endogenous regressors".into(),
            ));
        }
        for (role, cols) in [
            ("exog", &self.exog),
            ("endog", &self.endog),
            ("instruments", &self.instruments),
        ] {
            for (i, c) in cols.iter().enumerate() {
                if *c == self.outcome {
                    return Err(Error::InvalidSpec(format!(
                        "outcome `{c}` also listed in {role}"
                    )));
                }
                if cols[..i].contains(c) {
                    return Err(Error::InvalidSpec(format!(
                        "column `{c}` listed twice in {role}"
                    )));
                }
            }
        }
        for c in &self.exog {
            if self.endog.contains(c) || self.instruments.contains(c) {
                return Err(Error::InvalidSpec(format!(
                    "column `{c}` is both exogenous and endogenous/instrument"
                )));
            }
        }
        data.finite(&self.outcome)?;
        for c in self.exog.iter().chain(&self.endog).chain(&self.instruments) {
            data.finite(c)?;
        }
        for fe in &self.fixed_effects {
            data.codes(fe)?;
        }
        if let Some(c) = &self.cluster {
            data.codes(c)?;
        }
        if let Some(w) = &self.weights {
            let v = data.numeric(w)?;
            if let Some(row) = v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidWeight { row });
            }
        }
        if data.n_rows() == 0 {
            return Err(Error::EmptySample("dataset has no rows"));
        }
        Ok(())
    }
}
