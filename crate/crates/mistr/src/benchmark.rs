//! Simulation benchmark: replications of the synthetic designs, scored
//! against Monte Carlo truth on a Random and (standard designs) a Quantiles
//! test set.

use std::collections::BTreeMap;
use std::path::Path;

use mistr_core::rng::derive_seed;
use mistr_core::simulation::{self, mae, mse, spec, SettingId};
use mistr_core::{
    complete_case_estimate, ipcw_estimate, mistr_fit_predict, CensoringKind, Matrix, MistrEstimate, SurvivalDataset,
};
use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::error::CliError;
use crate::io;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    pub reps: usize,
    pub trees: usize,
    pub ell: usize,
    pub n_imputations: usize,
    pub m_trees: usize,
    pub q_steps: usize,
    pub n_min: usize,
    pub min_node: usize,
    /// Leaf sizes on the instrumental designs: minimum observed events per
    /// imputation-tree leaf and minimum units per forest leaf.
    pub iv_n_min: usize,
    pub iv_min_node: usize,
    /// Monte Carlo draws per truth value.
    pub n_mc: usize,
}

impl Profile {
    /// Small sample and forests; each design runs in minutes on one core.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            n_train: 1000,
            n_test: 1000,
            reps: 10,
            trees: 200,
            ell: 8,
            n_imputations: 25,
            m_trees: 200,
            q_steps: 3,
            n_min: 3,
            min_node: 5,
            iv_n_min: 18,
            iv_min_node: 18,
            n_mc: 20_000,
        }
    }

    /// The full protocol: 5000 training and test units, 100 replications,
    /// 2000 trees per forest and 200 imputations.
    pub fn full() -> Self {
        Self {
            name: "full".into(),
            n_train: 5000,
            n_test: 5000,
            reps: 100,
            trees: 2000,
            ell: 8,
            n_imputations: 200,
            m_trees: 1000,
            q_steps: 3,
            n_min: 3,
            min_node: 5,
            iv_n_min: 18,
            iv_min_node: 18,
            n_mc: 20_000,
        }
    }

    pub fn by_name(name: &str) -> Result<Self, CliError> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            _ => Err(CliError::Validation(format!("unknown profile `{name}` (expected desk or full)"))),
        }
    }

    /// Run configuration of `method` on design `id`.
    pub fn run_config(&self, id: SettingId, method: Method, seed: u64) -> RunConfig {
        let sp = spec(id);
        RunConfig {
            method,
            m_trees: self.m_trees,
            q_steps: self.q_steps,
            n_min: if id.is_iv() { self.iv_n_min } else { self.n_min },
            n_imputations: self.n_imputations,
            trees: self.trees,
            ell: self.ell,
            min_node: if id.is_iv() { self.iv_min_node } else { self.min_node },
            t_max: Some(sp.t_max),
            horizon: Some(sp.horizon),
            censoring_model: CensoringKind::SurvivalForestConditional,
            seed,
            ..RunConfig::default()
        }
    }
}

pub fn methods_for(id: SettingId) -> Vec<Method> {
    if id.is_iv() {
        vec![Method::Mistr, Method::MistrIv, Method::IpcwIv]
    } else {
        vec![Method::Mistr, Method::Ipcw, Method::CfComplete]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestSet {
    Random,
    Quantiles,
}

impl TestSet {
    pub fn name(self) -> &'static str {
        match self {
            TestSet::Random => "random",
            TestSet::Quantiles => "quantiles",
        }
    }
}

/// Estimates of one method on one test set. Points whose estimate failed
/// hold `NaN` and are left out of the metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutput {
    pub tau: Vec<f64>,
    /// Pooled (MISTR) or forest variance per point.
    pub total_var: Vec<Option<f64>>,
    pub within_var: Vec<Option<f64>>,
    pub between_var: Vec<Option<f64>>,
}

impl MethodOutput {
    fn failed(n: usize) -> Self {
        Self { tau: vec![f64::NAN; n], total_var: vec![None; n], within_var: vec![None; n], between_var: vec![None; n] }
    }

    pub fn n_failed(&self) -> usize {
        self.tau.iter().filter(|t| !t.is_finite()).count()
    }
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub setting: SettingId,
    pub rep: usize,
    pub train: SurvivalDataset,
    pub censoring_rate: f64,
    pub test: BTreeMap<TestSet, (Matrix, Vec<f64>)>,
    pub outputs: BTreeMap<(Method, TestSet), MethodOutput>,
    /// Methods that failed outright, with the reason.
    pub errors: BTreeMap<Method, String>,
}

impl Replication {
    pub fn truth(&self, set: TestSet) -> &[f64] {
        &self.test[&set].1
    }

    /// Metric over the points with a finite estimate.
    pub fn score(&self, method: Method, set: TestSet, metric: Metric) -> Option<f64> {
        let out = self.outputs.get(&(method, set))?;
        let (e, t): (Vec<f64>, Vec<f64>) = out
            .tau
            .iter()
            .zip(self.truth(set))
            .filter(|(e, _)| e.is_finite())
            .map(|(e, t)| (*e, *t))
            .unzip();
        match metric {
            Metric::Mse => mse(&e, &t).ok(),
            Metric::Mae => mae(&e, &t).ok(),
        }
    }
}

pub use mistr_core::simulation::Metric;

/// Seeds of replication `rep`: training data, test data, truth, methods.
fn rep_seeds(master: u64, rep: usize) -> [u64; 4] {
    let r = rep as u64;
    [0, 1, 2, 3].map(|k| derive_seed(master, &[r, k]))
}

/// Generates the data of one replication and fits `methods`.
pub fn run_replication(
    id: SettingId,
    rep: usize,
    profile: &Profile,
    methods: &[Method],
    master_seed: u64,
) -> Result<Replication, CliError> {
    let sp = spec(id);
    let g = sp.outcome();
    let [s_train, s_test, s_truth, s_fit] = rep_seeds(master_seed, rep);
    let train = simulation::generate(id, profile.n_train, s_train)?;
    let random = simulation::generate(id, profile.n_test, s_test)?;

    let mut test = BTreeMap::new();
    let rx = random.data.covariates().clone();
    let rt = simulation::true_cate_batch(id, &rx, profile.n_mc, s_truth, &g)?;
    test.insert(TestSet::Random, (rx, rt));
    if !id.is_iv() {
        let full = simulation::quantiles_test_set(id)?;
        let qt = simulation::true_cate_batch(id, &full, profile.n_mc, derive_seed(s_truth, &[1]), &g)?;
        let cols: Vec<usize> = (0..sp.p).collect();
        test.insert(TestSet::Quantiles, (full.select_columns(&cols), qt));
    }

    let mut outputs = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for &m in methods {
        let cfg = profile.run_config(id, m, s_fit);
        match fit_and_predict(&train.data, &cfg, &test) {
            Ok(per_set) => {
                for (set, out) in per_set {
                    outputs.insert((m, set), out);
                }
            }
            Err(e @ CliError::Degenerate(_)) => {
                errors.insert(m, e.to_string());
                for (set, (x, _)) in &test {
                    outputs.insert((m, *set), MethodOutput::failed(x.n_rows()));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Replication { setting: id, rep, censoring_rate: train.censoring_rate(), train: train.data, test, outputs, errors })
}

fn stack(test: &BTreeMap<TestSet, (Matrix, Vec<f64>)>) -> Result<(Matrix, Vec<(TestSet, usize)>), CliError> {
    let mut rows = Vec::new();
    let mut spans = Vec::new();
    for (set, (x, _)) in test {
        spans.push((*set, x.n_rows()));
        rows.extend(x.rows().map(<[f64]>::to_vec));
    }
    Ok((Matrix::from_rows(&rows)?, spans))
}

fn from_mistr(est: Vec<mistr_core::Result<MistrEstimate>>) -> MethodOutput {
    let mut out = MethodOutput::failed(0);
    for e in est {
        match e {
            Ok(e) => {
                out.tau.push(e.tau);
                out.total_var.push(e.total_var);
                out.within_var.push(e.within_var);
                out.between_var.push(e.between_var);
            }
            Err(_) => {
                out.tau.push(f64::NAN);
                out.total_var.push(None);
                out.within_var.push(None);
                out.between_var.push(None);
            }
        }
    }
    out
}

fn from_forest(forest: &mistr_core::CausalForestModel, x: &Matrix) -> MethodOutput {
    let mut out = MethodOutput::failed(0);
    for row in x.rows() {
        let p = forest.predict(row).ok();
        out.tau.push(p.as_ref().map_or(f64::NAN, |p| p.tau));
        let v = p.and_then(|p| p.variance);
        out.total_var.push(v);
        out.within_var.push(v);
        out.between_var.push(None);
    }
    out
}

fn split(out: MethodOutput, spans: &[(TestSet, usize)]) -> Vec<(TestSet, MethodOutput)> {
    let mut res = Vec::new();
    let mut start = 0;
    for &(set, len) in spans {
        let r = start..start + len;
        res.push((
            set,
            MethodOutput {
                tau: out.tau[r.clone()].to_vec(),
                total_var: out.total_var[r.clone()].to_vec(),
                within_var: out.within_var[r.clone()].to_vec(),
                between_var: out.between_var[r].to_vec(),
            },
        ));
        start += len;
    }
    res
}

fn fit_and_predict(
    ds: &SurvivalDataset,
    cfg: &RunConfig,
    test: &BTreeMap<TestSet, (Matrix, Vec<f64>)>,
) -> Result<Vec<(TestSet, MethodOutput)>, CliError> {
    let (x, spans) = stack(test)?;
    let out = match cfg.method {
        Method::Mistr | Method::MistrIv => {
            let mc = cfg.mistr_config(ds.p())?;
            // the unconfounded estimator ignores any instrument in the data
            let data = if cfg.method == Method::Mistr { ds.with_instrument(None)? } else { ds.clone() };
            from_mistr(mistr_fit_predict(&data, &mc, &x)?.estimates)
        }
        Method::Ipcw | Method::IpcwIv => {
            let m = ipcw_estimate(ds, &cfg.outcome()?, &cfg.ipcw_params(ds.p())?)?;
            from_forest(m.forest(), &x)
        }
        Method::CfComplete => {
            let f = complete_case_estimate(ds, &cfg.outcome()?, &cfg.forest_params(), false)?;
            from_forest(&f, &x)
        }
    };
    Ok(split(out, &spans))
}

/// Mean and standard error of a metric across replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub method: String,
    pub test_set: String,
    pub metric: String,
    pub mean: f64,
    pub sem: Option<f64>,
    pub reps: usize,
    pub per_replication: Vec<f64>,
}

/// Order key of a design: standard designs first, then instrumental ones.
pub fn setting_order(id: SettingId) -> usize {
    SettingId::STANDARD.iter().chain(SettingId::IV.iter()).position(|s| *s == id).unwrap_or(usize::MAX)
}

pub fn summarize(reps: &[Replication]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, usize, TestSet, u8), (SettingId, Method, Vec<f64>)> = BTreeMap::new();
    for r in reps {
        for (&(m, set), _) in &r.outputs {
            let mi = Method::ALL.iter().position(|x| *x == m).unwrap_or(0);
            for (k, metric) in [(0u8, Metric::Mse), (1u8, Metric::Mae)] {
                if let Some(v) = r.score(m, set, metric) {
                    groups
                        .entry((setting_order(r.setting), mi, set, k))
                        .or_insert_with(|| (r.setting, m, Vec::new()))
                        .2
                        .push(v);
                }
            }
        }
    }
    groups
        .into_iter()
        .map(|((_, _, set, k), (id, m, vals))| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sem = (vals.len() > 1)
                .then(|| (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0) / n).sqrt());
            SummaryRow {
                setting: id.to_string(),
                method: m.to_string(),
                test_set: set.name().into(),
                metric: if k == 0 { "mse" } else { "mae" }.into(),
                mean,
                sem,
                reps: vals.len(),
                per_replication: vals,
            }
        })
        .collect()
}

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";

/// Writes `results.csv`, `results.json` and one scatter file per
/// replication, method and test set. Returns the relative paths written.
pub fn write_results(dir: &Path, reps: &[Replication]) -> Result<Vec<String>, CliError> {
    let rows = summarize(reps);
    let table: Vec<Vec<Option<String>>> = rows
        .iter()
        .map(|r| {
            vec![
                Some(r.setting.clone()),
                Some(r.method.clone()),
                Some(r.test_set.clone()),
                Some(r.metric.clone()),
                Some(r.mean.to_string()),
                r.sem.map(|s| s.to_string()),
                Some(r.reps.to_string()),
            ]
        })
        .collect();
    io::save_table(&["setting", "method", "test_set", "metric", "mean", "sem", "reps"], &table, &dir.join(RESULTS_CSV))?;
    crate::manifest::write_json(&dir.join(RESULTS_JSON), &rows)?;
    let mut files = vec![RESULTS_CSV.to_owned(), RESULTS_JSON.to_owned()];

    io::create_dir(&dir.join("scatter"))?;
    let mut sorted: Vec<&Replication> = reps.iter().collect();
    sorted.sort_by_key(|r| (setting_order(r.setting), r.rep));
    for r in sorted {
        for (&(m, set), out) in &r.outputs {
            let rel = format!("scatter/{}_{}_{}_rep{:03}.csv", r.setting, m, set.name(), r.rep);
            let rows: Vec<Vec<Option<String>>> = r
                .truth(set)
                .iter()
                .zip(&out.tau)
                .map(|(t, e)| vec![Some(t.to_string()), e.is_finite().then(|| e.to_string())])
                .collect();
            io::save_table(&["true", "estimated"], &rows, &dir.join(&rel))?;
            files.push(rel);
        }
    }
    Ok(files)
}
