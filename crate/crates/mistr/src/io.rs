//! CSV ingestion and emission.
//!
//! A dataset file has a header row, covariate columns, a 0/1 treatment
//! column, an optional 0/1 instrument column, a time column and a 0/1 event
//! column. Floats are written in shortest round-trip form, so
//! `load -> save -> load` reproduces every value bit for bit.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use mistr_core::{Matrix, SurvivalDataset};

use crate::error::CliError;

/// Column names used to read a dataset. Empty `covariates` means every
/// column not claimed by another role, in file order; a column named `z` is
/// never taken as a covariate this way.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub covariates: Vec<String>,
    pub treatment: String,
    pub instrument: Option<String>,
    pub time: String,
    pub event: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            covariates: Vec::new(),
            treatment: "w".into(),
            instrument: None,
            time: "time".into(),
            event: "event".into(),
        }
    }
}

impl Schema {
    /// The default schema, with the instrument set to `z` when the file has
    /// such a column.
    pub fn detect(path: &Path) -> Result<Self, CliError> {
        let headers = read_headers(path)?;
        let mut s = Self::default();
        if headers.iter().any(|h| h == "z") {
            s.instrument = Some("z".into());
        }
        Ok(s)
    }

    fn roles(&self) -> Vec<&str> {
        let mut r = vec![self.treatment.as_str(), self.time.as_str(), self.event.as_str()];
        if let Some(z) = &self.instrument {
            r.push(z);
        }
        r
    }
}

/// Summary printed after a successful load.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadReport {
    pub n: usize,
    pub p: usize,
    pub censoring_rate: f64,
}

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

pub fn read_headers(path: &Path) -> Result<Vec<String>, CliError> {
    let mut rdr = reader(path)?;
    let h = rdr.headers().map_err(|e| CliError::csv(path, e))?;
    Ok(h.iter().map(str::to_owned).collect())
}

fn column_index(headers: &[String], name: &str, path: &Path) -> Result<usize, CliError> {
    headers.iter().position(|h| h == name).ok_or_else(|| CliError::Validation(format!(
        "{}: missing column `{name}`",
        path.display()
    )))
}

/// Numeric cells of the selected columns. Rows are numbered from 1 after
/// the header.
fn read_columns(path: &Path, cols: &[usize], names: &[String]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = reader(path)?;
    let mut out = vec![Vec::new(); cols.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        for (k, &c) in cols.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Validation(format!(
                    "{}: row {}, column `{}`: `{cell}` is not a number",
                    path.display(),
                    r + 1,
                    names[k]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Validation(format!(
                    "{}: row {}, column `{}`: value must be finite",
                    path.display(),
                    r + 1,
                    names[k]
                )));
            }
            out[k].push(v);
        }
    }
    Ok(out)
}

fn flags(values: &[f64], name: &str, path: &Path) -> Result<Vec<bool>, CliError> {
    values
        .iter()
        .enumerate()
        .map(|(r, &v)| match v {
            v if v == 0.0 => Ok(false),
            v if v == 1.0 => Ok(true),
            _ => Err(CliError::Validation(format!(
                "{}: row {}, column `{name}`: expected 0 or 1, found {v}",
                path.display(),
                r + 1
            ))),
        })
        .collect()
}

pub fn load_dataset(path: &Path, schema: &Schema) -> Result<SurvivalDataset, CliError> {
    let headers = read_headers(path)?;
    let roles = schema.roles();
    let cov_names: Vec<String> = if schema.covariates.is_empty() {
        headers.iter().filter(|h| !roles.contains(&h.as_str()) && h.as_str() != "z").cloned().collect()
    } else {
        schema.covariates.clone()
    };
    if cov_names.is_empty() {
        return Err(CliError::Validation(format!("{}: no covariate columns", path.display())));
    }
    let mut names = cov_names.clone();
    names.push(schema.treatment.clone());
    names.push(schema.time.clone());
    names.push(schema.event.clone());
    if let Some(z) = &schema.instrument {
        names.push(z.clone());
    }
    let cols = names.iter().map(|n| column_index(&headers, n, path)).collect::<Result<Vec<_>, _>>()?;
    let mut data = read_columns(path, &cols, &names)?;
    let p = cov_names.len();
    let n = data[0].len();

    let z = if schema.instrument.is_some() { Some(flags(&data[p + 3], &names[p + 3], path)?) } else { None };
    let event = flags(&data[p + 2], &schema.event, path)?;
    let time = std::mem::take(&mut data[p + 1]);
    if let Some(r) = time.iter().position(|&t| t < 0.0) {
        return Err(CliError::Validation(format!(
            "{}: row {}, column `{}`: negative time {}",
            path.display(),
            r + 1,
            schema.time,
            time[r]
        )));
    }
    let w = flags(&data[p], &schema.treatment, path)?;

    let mut x = Vec::with_capacity(n * p);
    for i in 0..n {
        for col in data.iter().take(p) {
            x.push(col[i]);
        }
    }
    let x = Matrix::new(n, p, x).map_err(CliError::from_core)?;
    SurvivalDataset::with_names(x, cov_names, w, z, time, event)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn describe(ds: &SurvivalDataset) -> LoadReport {
    LoadReport { n: ds.n(), p: ds.p(), censoring_rate: ds.censoring_rate() }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes `ds` with columns `<covariates>, w, [z], time, event`.
pub fn save_dataset(ds: &SurvivalDataset, path: &Path) -> Result<(), CliError> {
    let mut wtr = create(path)?;
    let mut header: Vec<String> = ds.covariate_names().to_vec();
    header.push("w".into());
    if ds.instrument().is_some() {
        header.push("z".into());
    }
    header.push("time".into());
    header.push("event".into());
    wtr.write_record(&header).map_err(|e| CliError::csv(path, e))?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.covariates().row(i).iter().map(f64::to_string).collect();
        rec.push(flag(ds.treatment()[i]).into());
        if let Some(z) = ds.instrument() {
            rec.push(flag(z[i]).into());
        }
        rec.push(ds.time()[i].to_string());
        rec.push(flag(ds.event()[i]).into());
        wtr.write_record(&rec).map_err(|e| CliError::csv(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

/// Covariate matrix of a query file, columns selected by name.
pub fn load_covariates(path: &Path, names: &[String]) -> Result<Matrix, CliError> {
    let headers = read_headers(path)?;
    let cols = names
        .iter()
        .map(|n| {
            headers.iter().position(|h| h == n).ok_or_else(|| {
                CliError::Validation(format!(
                    "{}: schema mismatch, the model expects covariate `{n}`",
                    path.display()
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let data = read_columns(path, &cols, names)?;
    let n = data.first().map_or(0, Vec::len);
    let mut x = Vec::with_capacity(n * names.len());
    for i in 0..n {
        for col in &data {
            x.push(col[i]);
        }
    }
    Matrix::new(n, names.len(), x).map_err(CliError::from_core)
}

pub fn save_matrix(m: &Matrix, names: &[String], path: &Path) -> Result<(), CliError> {
    let mut wtr = create(path)?;
    wtr.write_record(names).map_err(|e| CliError::csv(path, e))?;
    for row in m.rows() {
        wtr.write_record(row.iter().map(f64::to_string)).map_err(|e| CliError::csv(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

/// A CSV of string cells; `None` cells are written as `NA`.
pub fn save_table(header: &[&str], rows: &[Vec<Option<String>>], path: &Path) -> Result<(), CliError> {
    let mut wtr = create(path)?;
    wtr.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for r in rows {
        wtr.write_record(r.iter().map(|c| c.as_deref().unwrap_or("NA"))).map_err(|e| CliError::csv(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

/// Rows of a CSV as string cells, header first.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::csv(path, e))?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}
