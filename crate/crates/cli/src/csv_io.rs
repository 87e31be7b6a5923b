//! CSV datasets: typed loading with schema hints, and a lossless writer.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use didweak_core::data::Categorical;
use didweak_core::{Column, Dataset};

use crate::error::{CliError, Result};

/// Column typing overrides and the set of columns that must be complete.
///
/// Columns not named here are numeric when every non-blank cell parses as
/// a number and categorical otherwise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaHints {
    pub categorical: Vec<String>,
    pub numeric: Vec<String>,
    /// Columns in which a blank cell is an error.
    pub required: Vec<String>,
}

pub fn load_csv(path: &Path, hints: &SchemaHints) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, &path.display().to_string(), hints)
}

/// Column names from the header row.
pub fn read_header(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let h = rdr.headers().map_err(|e| CliError::Csv { source_name: path.display().to_string(), line: 1, message: e.to_string() })?;
    Ok(h.iter().map(str::to_owned).collect())
}

pub fn read_csv<R: Read>(reader: R, source_name: &str, hints: &SchemaHints) -> Result<Dataset> {
    let csv_err = |line: u64, message: String| CliError::Csv { source_name: source_name.into(), line, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(csv_err(1, "missing header row".into()));
    }
    for (i, h) in header.iter().enumerate() {
        if h.is_empty() {
            return Err(csv_err(1, format!("column {} has an empty name", i + 1)));
        }
        if header[..i].contains(h) {
            return Err(csv_err(1, format!("duplicate column `{h}`")));
        }
    }
    for name in hints.categorical.iter().chain(&hints.numeric).chain(&hints.required) {
        if !header.contains(name) {
            return Err(CliError::Core(didweak_core::Error::MissingColumn(name.clone())));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut lines: Vec<u64> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        for (k, v) in rec.iter().enumerate() {
            cells[k].push(v.to_owned());
        }
        lines.push(line);
    }

    let mut data = Dataset::new(lines.len());
    for (k, name) in header.iter().enumerate() {
        let col = &cells[k];
        let blanks: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_empty()).collect();
        if hints.required.contains(name) && !blanks.is_empty() {
            return Err(csv_err(
                lines[blanks[0]],
                format!("column `{name}` has {} row(s) with missing values (first at data row {})", blanks.len(), blanks[0] + 1),
            ));
        }
        let force_cat = hints.categorical.contains(name);
        let force_num = hints.numeric.contains(name);
        let parsed: Vec<Option<f64>> = col.iter().map(|v| if v.is_empty() { Some(f64::NAN) } else { v.parse().ok() }).collect();
        let numeric = !force_cat && (force_num || parsed.iter().all(Option::is_some));
        let column = if numeric {
            if let Some(i) = parsed.iter().position(Option::is_none) {
                return Err(csv_err(lines[i], format!("column `{name}`: cannot parse `{}` as a number", col[i])));
            }
            Column::Numeric(parsed.into_iter().map(Option::unwrap).collect())
        } else {
            Column::Categorical(Categorical::from_labels(col))
        };
        data.push(name.clone(), column)?;
    }
    Ok(data)
}

/// Write `data` with a header row. Numbers use the shortest representation
/// that parses back to the same value; NaN is written as a blank cell.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| CliError::Parse { source_name: "csv writer".into(), message: e.to_string() };
    wtr.write_record(data.names()).map_err(map)?;
    let cols: Vec<&Column> = data.names().iter().map(|n| data.column(n).unwrap()).collect();
    for i in 0..data.n_rows() {
        let row: Vec<String> = cols
            .iter()
            .map(|c| match c {
                Column::Numeric(v) if v[i].is_nan() => String::new(),
                Column::Numeric(v) => format_number(v[i]),
                Column::Categorical(c) => c.levels[c.codes[i] as usize].clone(),
            })
            .collect();
        wtr.write_record(&row).map_err(map)?;
    }
    wtr.flush().map_err(|e| CliError::io("csv writer", e))
}

pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(data, file)
}

/// Shortest round-trip form.
pub fn format_number(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:?}")
}

/// Write a plain table of preformatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let map = |e: csv::Error| CliError::Parse { source_name: path.display().to_string(), message: e.to_string() };
    wtr.write_record(header).map_err(map)?;
    for r in rows {
        wtr.write_record(r).map_err(map)?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}
