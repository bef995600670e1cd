//! The subcommands as library functions. Each writes its outputs plus one
//! `manifest.json` into its output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mistr_core::simulation::{self, spec, MimicColumns, SettingId, MIMIC_HORIZON, MIMIC_T_MAX};
use mistr_core::{
    complete_case_estimate, ipcw_estimate, mistr_fit, Matrix, OutcomeTransform, SurvivalDataset,
};
use mistr_core::rng::{derive_seed, tag};
use serde_json::json;

use crate::artifact::{Model, PREDICTION_COLUMNS};
use crate::benchmark::{self, methods_for, Profile, Replication};
use crate::config::{Method, RunConfig};
use crate::error::CliError;
use crate::io::{self, Schema};
use crate::manifest::RunManifest;
use crate::report::{self, Report};

/// Design selected by `simulate`.
#[derive(Clone, Debug, PartialEq)]
pub enum Design {
    Setting(SettingId),
    /// Semi-simulation on a covariate file.
    Mimic { covariates: PathBuf, lambda_c: f64 },
}

impl Design {
    pub fn parse(name: &str, covariates: Option<&Path>, lambda_c: f64) -> Result<Self, CliError> {
        if name == "mimic" {
            let covariates = covariates
                .ok_or_else(|| CliError::Validation("the mimic design needs --covariates <csv>".into()))?
                .to_path_buf();
            return Ok(Design::Mimic { covariates, lambda_c });
        }
        name.parse().map(Design::Setting).map_err(|_| {
            CliError::Validation(format!("unknown setting `{name}`; known: {}", simulation::known_settings()))
        })
    }

    fn label(&self) -> String {
        match self {
            Design::Setting(id) => id.to_string(),
            Design::Mimic { .. } => "mimic".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateArgs {
    pub design: Design,
    pub n: usize,
    pub seed: u64,
    pub n_mc: usize,
    pub censoring: bool,
}

fn names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("{prefix}{j}")).collect()
}

fn write_truth(path: &Path, tau: &[f64]) -> Result<(), CliError> {
    let rows: Vec<Vec<Option<String>>> = tau.iter().map(|t| vec![Some(t.to_string())]).collect();
    io::save_table(&["tau"], &rows, path)
}

/// Writes `data.csv`, `truth.csv` (true effect at each row) and, for the
/// standard designs, `quantiles.csv` (grid covariates with their truth).
pub fn simulate(args: &SimulateArgs, out: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    io::create_dir(out)?;
    let mut config = std::collections::BTreeMap::new();
    config.insert("setting".to_owned(), args.design.label());
    config.insert("n".to_owned(), args.n.to_string());
    config.insert("n_mc".to_owned(), args.n_mc.to_string());
    config.insert("censoring".to_owned(), args.censoring.to_string());
    let mut manifest = RunManifest::new("simulate", args.seed, config);
    let mut files = vec!["data.csv".to_owned(), "truth.csv".to_owned()];

    let ds = match &args.design {
        Design::Setting(id) => {
            let opts = simulation::GeneratorOptions { censoring: args.censoring, ..Default::default() };
            let sample = simulation::generate_with(*id, args.n, args.seed, &opts)?;
            let g = spec(*id).outcome();
            let truth =
                simulation::true_cate_batch(*id, sample.data.covariates(), args.n_mc, derive_seed(args.seed, &[tag::TRUTH]), &g)?;
            write_truth(&out.join("truth.csv"), &truth)?;
            if !id.is_iv() {
                let q = simulation::quantiles_test_set(*id)?;
                let qt = simulation::true_cate_batch(*id, &q, args.n_mc, derive_seed(args.seed, &[tag::TRUTH, 1]), &g)?;
                let mut rows = Vec::new();
                for (x, t) in q.rows().zip(&qt) {
                    let mut r: Vec<Option<String>> = x.iter().map(|v| Some(v.to_string())).collect();
                    r.push(Some(t.to_string()));
                    rows.push(r);
                }
                let mut header = names("x", q.n_cols());
                header.push("tau".into());
                let header: Vec<&str> = header.iter().map(String::as_str).collect();
                io::save_table(&header, &rows, &out.join("quantiles.csv"))?;
                files.push("quantiles.csv".into());
            }
            sample.data
        }
        Design::Mimic { covariates, lambda_c } => {
            let (header, _) = io::read_table(covariates)?;
            let x = io::load_covariates(covariates, &header)?;
            manifest.add_input(covariates)?;
            let follow_up = if args.censoring { MIMIC_T_MAX } else { f64::INFINITY };
            let lc = if args.censoring { *lambda_c } else { 1e6 };
            let cols = MimicColumns::default();
            let sample = simulation::mimic_formula_sample(&x, &cols, lc, follow_up, args.seed)?;
            let truth: Vec<f64> = sample
                .data
                .covariates()
                .rows()
                .map(|r| {
                    let b = cols.binary.map(|j| r[j]);
                    simulation::mimic_true_cate(&b, r[cols.continuous], MIMIC_HORIZON as u32)
                })
                .collect();
            write_truth(&out.join("truth.csv"), &truth)?;
            SurvivalDataset::with_names(
                sample.data.covariates().clone(),
                header,
                sample.data.treatment().to_vec(),
                None,
                sample.data.time().to_vec(),
                sample.data.event().to_vec(),
            )?
        }
    };
    io::save_dataset(&ds, &out.join("data.csv"))?;
    manifest.diagnostics = json!({
        "n": ds.n(),
        "p": ds.p(),
        "censoring_rate": ds.censoring_rate(),
    });
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.clone().write(out, &files)?;
    Ok(manifest)
}

/// Fits the configured method and writes a model directory.
pub fn fit(data: &Path, cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    cfg.study()?;
    if let (true, Some(z)) = (cfg.method.is_iv(), &cfg.schema.instrument) {
        if !io::read_headers(data)?.contains(z) {
            return Err(CliError::Validation(format!(
                "method {} needs an instrument column, but {} has no column `{z}`; set `instrument_column` to the 0/1 instrument",
                cfg.method,
                data.display()
            )));
        }
    }
    let ds = io::load_dataset(data, &cfg.schema)?;
    cfg.check_data(&ds)?;
    let g: OutcomeTransform = cfg.outcome()?;
    let ds = if cfg.method.is_iv() { ds } else { ds.with_instrument(None)? };

    let (model, diagnostics) = match cfg.method {
        Method::Mistr | Method::MistrIv => {
            let mc = cfg.mistr_config(ds.p())?;
            let m = mistr_fit(&ds, &mc)?;
            let d = m.diagnostics();
            let diag = json!({
                "n_imputed": d.n_imputed,
                "n_fallback": d.n_fallback,
                "imputed_per_step": d.rist.imputed_per_step,
                "fallback_per_step": d.rist.fallback_per_step,
                "rist_seed": mc.rist_seed(),
                "imputation_seed": mc.imputation_seed(),
                "forest_seed_0": mc.forest_seed(0),
            });
            (Model::Mistr(m), diag)
        }
        Method::Ipcw | Method::IpcwIv => {
            let m = ipcw_estimate(&ds, &g, &cfg.ipcw_params(ds.p())?)?;
            let diag = json!({ "n_clamped": m.n_clamped(), "n_used": m.n_used() });
            (Model::Ipcw(m), diag)
        }
        Method::CfComplete => {
            let f = complete_case_estimate(&ds, &g, &cfg.forest_params(), false)?;
            let diag = json!({ "n_used": f.n_train() });
            (Model::Forest(f), diag)
        }
    };
    io::create_dir(out)?;
    let files = model.save(out, cfg.method.name(), ds.covariate_names())?;
    let mut manifest = RunManifest::new("fit", cfg.seed, cfg.snapshot());
    manifest.add_input(data)?;
    manifest.diagnostics = json!({
        "n": ds.n(),
        "p": ds.p(),
        "censoring_rate": ds.censoring_rate(),
        "method": diagnostics,
    });
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.clone().write(out, &files)?;
    Ok(manifest)
}

/// Summary of a `predict` run.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictSummary {
    pub rows: usize,
    pub failed: usize,
}

/// Estimates at every row of `queries`, written to `out` with columns
/// `tau, within_var, between_var, total_var, n_excluded_imputations`.
pub fn predict(model_dir: &Path, queries: &Path, out: &Path) -> Result<PredictSummary, CliError> {
    let (model, header) = Model::load(model_dir)?;
    let x: Matrix = io::load_covariates(queries, &header.covariate_names)?;
    if x.n_cols() != model.n_covariates() {
        return Err(CliError::Validation(format!(
            "schema mismatch: model has {} covariates, query has {}",
            model.n_covariates(),
            x.n_cols()
        )));
    }
    let (rows, err) = model.predict(&x);
    let failed = rows.iter().filter(|r| r.tau.is_none()).count();
    let cells: Vec<Vec<Option<String>>> = rows.iter().map(|r| r.cells()).collect();
    io::save_table(&PREDICTION_COLUMNS, &cells, out)?;
    if failed > 0 && failed == rows.len() {
        return Err(err.unwrap_or_else(|| CliError::Degenerate("every prediction failed".into())));
    }
    Ok(PredictSummary { rows: rows.len(), failed })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkArgs {
    pub settings: Vec<SettingId>,
    pub profile: Profile,
    pub seed: u64,
}

/// Runs every replication of every design and writes the result tables.
pub fn run_benchmark(args: &BenchmarkArgs, out: &Path) -> Result<Vec<Replication>, CliError> {
    let start = Instant::now();
    let mut settings = args.settings.clone();
    settings.sort_by_key(|id| benchmark::setting_order(*id));
    settings.dedup();
    let mut reps = Vec::new();
    for &id in &settings {
        let methods = methods_for(id);
        let setting_seed = derive_seed(args.seed, &[benchmark::setting_order(id) as u64]);
        for r in 0..args.profile.reps {
            reps.push(benchmark::run_replication(id, r, &args.profile, &methods, setting_seed)?);
        }
    }
    io::create_dir(out)?;
    let files = benchmark::write_results(out, &reps)?;
    let mut config = std::collections::BTreeMap::new();
    config.insert(
        "settings".to_owned(),
        settings.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
    );
    let p = &args.profile;
    for (k, v) in [
        ("profile", p.name.clone()),
        ("n_train", p.n_train.to_string()),
        ("n_test", p.n_test.to_string()),
        ("reps", p.reps.to_string()),
        ("trees", p.trees.to_string()),
        ("ell", p.ell.to_string()),
        ("A", p.n_imputations.to_string()),
        ("M", p.m_trees.to_string()),
        ("Q", p.q_steps.to_string()),
        ("n_min", p.n_min.to_string()),
        ("min_node", p.min_node.to_string()),
        ("iv_n_min", p.iv_n_min.to_string()),
        ("iv_min_node", p.iv_min_node.to_string()),
        ("n_mc", p.n_mc.to_string()),
    ] {
        config.insert(k.to_owned(), v);
    }
    let mut manifest = RunManifest::new("benchmark", args.seed, config);
    let errors: Vec<_> = reps
        .iter()
        .flat_map(|r| r.errors.iter().map(move |(m, e)| json!({"setting": r.setting.to_string(), "rep": r.rep, "method": m.name(), "error": e})))
        .collect();
    let failed_points: usize =
        reps.iter().flat_map(|r| r.outputs.values()).map(benchmark::MethodOutput::n_failed).sum();
    let rates: Vec<_> = reps
        .iter()
        .map(|r| json!({"setting": r.setting.to_string(), "rep": r.rep, "censoring_rate": r.censoring_rate}))
        .collect();
    manifest.diagnostics = json!({
        "failed_methods": errors,
        "failed_points": failed_points,
        "censoring_rates": rates,
    });
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(out, &files)?;
    Ok(reps)
}

pub fn report(results: &Path, out: &Path) -> Result<Report, CliError> {
    report::write(results, out)
}

/// Default dataset schema of a file: the instrument is `z` when present.
pub fn detect_schema(path: &Path) -> Result<Schema, CliError> {
    Schema::detect(path)
}
