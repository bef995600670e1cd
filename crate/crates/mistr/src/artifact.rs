//! Model directories: `model.json` (header), the serialized models, and the
//! run manifest with a digest of every file.
//!
//! MISTR models store `rist.json` and one `forests/forest_NNNN.json` per
//! imputation; IPCW models store `ipcw.json`; complete-case forests store
//! `forest.json`.

use std::path::Path;

use mistr_core::mistr::MistrDiagnostics;
use mistr_core::{CausalForestModel, IpcwModel, Matrix, MistrConfig, MistrModel, RistModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::{read_json, write_json, RunManifest, FORMAT_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub method: String,
    pub covariate_names: Vec<String>,
    pub mistr: Option<MistrHeader>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MistrHeader {
    pub config: MistrConfig,
    pub diagnostics: MistrDiagnostics,
    pub n_forests: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Mistr(MistrModel),
    Ipcw(IpcwModel),
    Forest(CausalForestModel),
}

/// One output row of `predict`. Missing values are written as `NA`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    pub tau: Option<f64>,
    pub within_var: Option<f64>,
    pub between_var: Option<f64>,
    pub total_var: Option<f64>,
    pub n_excluded: usize,
}

pub const PREDICTION_COLUMNS: [&str; 5] = ["tau", "within_var", "between_var", "total_var", "n_excluded_imputations"];

impl Prediction {
    pub fn cells(&self) -> Vec<Option<String>> {
        let f = |v: Option<f64>| v.map(|x| x.to_string());
        vec![f(self.tau), f(self.within_var), f(self.between_var), f(self.total_var), Some(self.n_excluded.to_string())]
    }
}

fn forest_file(a: usize) -> String {
    format!("forests/forest_{a:04}.json")
}

impl Model {
    /// Writes the model files into `dir` and returns their relative paths.
    pub fn save(&self, dir: &Path, method: &str, covariate_names: &[String]) -> Result<Vec<String>, CliError> {
        let mut files = vec!["model.json".to_owned()];
        let mut header = ModelHeader {
            format_version: FORMAT_VERSION,
            method: method.to_owned(),
            covariate_names: covariate_names.to_vec(),
            mistr: None,
        };
        match self {
            Model::Mistr(m) => {
                header.mistr = Some(MistrHeader {
                    config: *m.config(),
                    diagnostics: m.diagnostics().clone(),
                    n_forests: m.n_imputations(),
                });
                write_json(&dir.join("rist.json"), m.rist())?;
                files.push("rist.json".into());
                std::fs::create_dir_all(dir.join("forests")).map_err(|e| CliError::io(dir, e))?;
                for (a, f) in m.forests().iter().enumerate() {
                    write_json(&dir.join(forest_file(a)), f)?;
                    files.push(forest_file(a));
                }
            }
            Model::Ipcw(m) => {
                write_json(&dir.join("ipcw.json"), m)?;
                files.push("ipcw.json".into());
            }
            Model::Forest(f) => {
                write_json(&dir.join("forest.json"), f)?;
                files.push("forest.json".into());
            }
        }
        write_json(&dir.join("model.json"), &header)?;
        Ok(files)
    }

    /// Loads a model directory after checking its manifest digests.
    pub fn load(dir: &Path) -> Result<(Model, ModelHeader), CliError> {
        let manifest = RunManifest::read(dir)?;
        manifest.verify(dir)?;
        let header: ModelHeader = read_json(&dir.join("model.json"))?;
        if header.format_version != FORMAT_VERSION {
            return Err(CliError::Validation(format!(
                "{}: unsupported model format version {}",
                dir.display(),
                header.format_version
            )));
        }
        let model = match (&header.mistr, header.method.as_str()) {
            (Some(h), _) => {
                let rist: RistModel = read_json(&dir.join("rist.json"))?;
                let forests = (0..h.n_forests)
                    .map(|a| read_json(&dir.join(forest_file(a))))
                    .collect::<Result<Vec<CausalForestModel>, _>>()?;
                Model::Mistr(MistrModel::from_parts(h.config, rist, forests, h.diagnostics.clone())?)
            }
            (None, "ipcw" | "ipcw-iv") => Model::Ipcw(read_json(&dir.join("ipcw.json"))?),
            (None, _) => Model::Forest(read_json(&dir.join("forest.json"))?),
        };
        Ok((model, header))
    }

    pub fn n_covariates(&self) -> usize {
        match self {
            Model::Mistr(m) => m.n_covariates(),
            Model::Ipcw(m) => m.forest().n_covariates(),
            Model::Forest(f) => f.n_covariates(),
        }
    }

    /// Predictions for every query row. A row whose estimate is degenerate
    /// gets `tau = NA`; the error of the first such row is returned alongside.
    pub fn predict(&self, queries: &Matrix) -> (Vec<Prediction>, Option<CliError>) {
        let mut first_err = None;
        let rows = match self {
            Model::Mistr(m) => m
                .predict_batch(queries)
                .into_iter()
                .map(|r| match r {
                    Ok(e) => Prediction {
                        tau: Some(e.tau),
                        within_var: e.within_var,
                        between_var: e.between_var,
                        total_var: e.total_var,
                        n_excluded: e.n_excluded,
                    },
                    Err(e) => {
                        first_err.get_or_insert(CliError::from_core(e));
                        Prediction { n_excluded: m.n_imputations(), ..Prediction::default() }
                    }
                })
                .collect(),
            Model::Ipcw(_) | Model::Forest(_) => {
                let forest = match self {
                    Model::Ipcw(m) => m.forest(),
                    Model::Forest(f) => f,
                    Model::Mistr(_) => unreachable!(),
                };
                queries
                    .rows()
                    .map(|x| match forest.predict(x) {
                        Ok(p) => Prediction {
                            tau: Some(p.tau),
                            within_var: p.variance,
                            between_var: None,
                            total_var: p.variance,
                            n_excluded: 0,
                        },
                        Err(e) => {
                            first_err.get_or_insert(CliError::from_core(e));
                            Prediction::default()
                        }
                    })
                    .collect()
            }
        };
        (rows, first_err)
    }
}
