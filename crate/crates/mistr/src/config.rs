//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, keys are case-sensitive. Time
//! keys carry their unit in the name (`t_max_time`, `horizon_time`); the
//! short forms `t_max` and `horizon` are accepted too.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mistr_core::{
    CensoringKind, CrossFitting, ErtParams, EstimationMode, ForestParams, ForestSeeding, IpcwParams, MistrConfig,
    OutcomeKind, OutcomeTransform, RistParams, StudyConfig, SurvivalDataset,
};
use mistr_core::rng::{derive_seed, tag};

use crate::error::CliError;
use crate::io::Schema;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Mistr,
    MistrIv,
    Ipcw,
    IpcwIv,
    CfComplete,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mistr, Method::MistrIv, Method::Ipcw, Method::IpcwIv, Method::CfComplete];

    pub fn is_iv(self) -> bool {
        matches!(self, Method::MistrIv | Method::IpcwIv)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Mistr => "mistr",
            Method::MistrIv => "mistr-iv",
            Method::Ipcw => "ipcw",
            Method::IpcwIv => "ipcw-iv",
            Method::CfComplete => "cf-complete",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Validation(format!(
                "unknown method `{s}` (expected mistr, mistr-iv, ipcw, ipcw-iv or cf-complete)"
            )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    /// Trees of each survival forest (`M`).
    pub m_trees: usize,
    pub q_steps: usize,
    /// Candidate splits per node; `None` uses every covariate plus the treatment.
    pub k_try: Option<usize>,
    pub n_min: usize,
    /// Minimum censoring events per leaf of the IPCW censoring forest.
    pub censoring_n_min: usize,
    pub n_imputations: usize,
    pub trees: usize,
    pub ell: usize,
    pub min_node: usize,
    pub honesty_fraction: f64,
    pub subsample_fraction: f64,
    pub alpha: f64,
    pub mtry: Option<usize>,
    pub cross_fitting: CrossFitting,
    pub t_max: Option<f64>,
    pub horizon: Option<f64>,
    pub g_kind: OutcomeKind,
    pub clamp: f64,
    pub censoring_model: CensoringKind,
    pub seeding: ForestSeeding,
    pub seed: u64,
    pub schema: Schema,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Mistr,
            m_trees: 1000,
            q_steps: 3,
            k_try: None,
            n_min: 3,
            censoring_n_min: 15,
            n_imputations: 200,
            trees: 2000,
            ell: 8,
            min_node: 5,
            honesty_fraction: 0.5,
            subsample_fraction: 0.5,
            alpha: 0.05,
            mtry: None,
            cross_fitting: CrossFitting::OutOfBag,
            t_max: None,
            horizon: None,
            g_kind: OutcomeKind::Rmst,
            clamp: 20.0,
            censoring_model: CensoringKind::SurvivalForestConditional,
            seeding: ForestSeeding::Shared,
            seed: 0,
            schema: Schema::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Validation(format!("config key `{key}`: cannot parse `{v}`")))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        let mut explicit_instrument = false;
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected `key = value`", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            c.set(k, v)?;
            explicit_instrument |= k == "instrument_column";
        }
        if c.method.is_iv() && !explicit_instrument && c.schema.instrument.is_none() {
            c.schema.instrument = Some("z".into());
        }
        Ok(c)
    }

    pub fn set(&mut self, k: &str, v: &str) -> Result<(), CliError> {
        match k {
            "method" => self.method = v.parse()?,
            "M" => self.m_trees = parse(k, v)?,
            "Q" => self.q_steps = parse(k, v)?,
            "K" => self.k_try = if v == "auto" { None } else { Some(parse(k, v)?) },
            "n_min" => self.n_min = parse(k, v)?,
            "censoring_n_min" => self.censoring_n_min = parse(k, v)?,
            "A" => self.n_imputations = parse(k, v)?,
            "trees" => self.trees = parse(k, v)?,
            "ell" => self.ell = parse(k, v)?,
            "min_node" => self.min_node = parse(k, v)?,
            "honesty_fraction" => self.honesty_fraction = parse(k, v)?,
            "subsample_fraction" => self.subsample_fraction = parse(k, v)?,
            "alpha" => self.alpha = parse(k, v)?,
            "mtry" => self.mtry = if v == "auto" { None } else { Some(parse(k, v)?) },
            "cross_fitting" => {
                self.cross_fitting = match v {
                    "oob" => CrossFitting::OutOfBag,
                    _ => match v.strip_prefix("kfold:") {
                        Some(f) => CrossFitting::KFold(parse(k, f)?),
                        None => return Err(CliError::Validation(format!("config key `{k}`: expected oob or kfold:<k>"))),
                    },
                }
            }
            "t_max_time" | "t_max" => self.t_max = Some(parse(k, v)?),
            "horizon_time" | "horizon" => self.horizon = Some(parse(k, v)?),
            "g_kind" => {
                self.g_kind = match v {
                    "rmst" => OutcomeKind::Rmst,
                    "survival" => OutcomeKind::SurvivalIndicator,
                    _ => return Err(CliError::Validation(format!("config key `{k}`: expected rmst or survival"))),
                }
            }
            "clamp" => self.clamp = parse(k, v)?,
            "censoring_model" => {
                self.censoring_model = match v {
                    "marginal" => CensoringKind::KaplanMeierMarginal,
                    "conditional" => CensoringKind::SurvivalForestConditional,
                    _ => {
                        return Err(CliError::Validation(format!("config key `{k}`: expected marginal or conditional")))
                    }
                }
            }
            "seeding" => {
                self.seeding = match v {
                    "shared" => ForestSeeding::Shared,
                    "per_imputation" => ForestSeeding::PerImputation,
                    _ => {
                        return Err(CliError::Validation(format!("config key `{k}`: expected shared or per_imputation")))
                    }
                }
            }
            "seed" => self.seed = parse(k, v)?,
            "covariates" => self.schema.covariates = list(v),
            "treatment_column" => self.schema.treatment = v.to_owned(),
            "instrument_column" => self.schema.instrument = (!v.is_empty() && v != "none").then(|| v.to_owned()),
            "time_column" => self.schema.time = v.to_owned(),
            "event_column" => self.schema.event = v.to_owned(),
            _ => return Err(CliError::Validation(format!("unknown config key `{k}`"))),
        }
        Ok(())
    }

    /// Every key with its effective value, in the file syntax.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let opt = |v: Option<usize>| v.map_or("auto".to_owned(), |k| k.to_string());
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_owned(), v);
        };
        put("method", self.method.to_string());
        put("M", self.m_trees.to_string());
        put("Q", self.q_steps.to_string());
        put("K", opt(self.k_try));
        put("n_min", self.n_min.to_string());
        put("censoring_n_min", self.censoring_n_min.to_string());
        put("A", self.n_imputations.to_string());
        put("trees", self.trees.to_string());
        put("ell", self.ell.to_string());
        put("min_node", self.min_node.to_string());
        put("honesty_fraction", self.honesty_fraction.to_string());
        put("subsample_fraction", self.subsample_fraction.to_string());
        put("alpha", self.alpha.to_string());
        put("mtry", opt(self.mtry));
        put(
            "cross_fitting",
            match self.cross_fitting {
                CrossFitting::OutOfBag => "oob".into(),
                CrossFitting::KFold(k) => format!("kfold:{k}"),
            },
        );
        if let Some(t) = self.t_max {
            put("t_max_time", t.to_string());
        }
        if let Some(h) = self.horizon {
            put("horizon_time", h.to_string());
        }
        put(
            "g_kind",
            match self.g_kind {
                OutcomeKind::Rmst => "rmst",
                OutcomeKind::SurvivalIndicator => "survival",
            }
            .into(),
        );
        put("clamp", self.clamp.to_string());
        put(
            "censoring_model",
            match self.censoring_model {
                CensoringKind::KaplanMeierMarginal => "marginal",
                CensoringKind::SurvivalForestConditional => "conditional",
            }
            .into(),
        );
        put(
            "seeding",
            match self.seeding {
                ForestSeeding::Shared => "shared",
                ForestSeeding::PerImputation => "per_imputation",
            }
            .into(),
        );
        put("seed", self.seed.to_string());
        if !self.schema.covariates.is_empty() {
            put("covariates", self.schema.covariates.join(","));
        }
        put("treatment_column", self.schema.treatment.clone());
        put("instrument_column", self.schema.instrument.clone().unwrap_or_else(|| "none".into()));
        put("time_column", self.schema.time.clone());
        put("event_column", self.schema.event.clone());
        m
    }

    /// Parses a snapshot back; `parse(render(snapshot))` is the identity.
    pub fn render(&self) -> String {
        self.snapshot().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Study times, checked before any fitting.
    pub fn study(&self) -> Result<StudyConfig, CliError> {
        let t_max = self.t_max.ok_or_else(|| CliError::Validation("config is missing `t_max_time`".into()))?;
        let h = self.horizon.ok_or_else(|| CliError::Validation("config is missing `horizon_time`".into()))?;
        if h > t_max {
            return Err(CliError::Validation(format!("horizon_time {h} exceeds t_max_time {t_max}")));
        }
        StudyConfig::new(t_max, h).map_err(CliError::from_core)
    }

    pub fn outcome(&self) -> Result<OutcomeTransform, CliError> {
        let s = self.study()?;
        OutcomeTransform::new(self.g_kind, s.horizon).map_err(CliError::from_core)
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            ell: self.ell,
            min_node: self.min_node,
            honesty_fraction: self.honesty_fraction,
            subsample_fraction: self.subsample_fraction,
            mtry: self.mtry,
            alpha: self.alpha,
            cross_fitting: self.cross_fitting,
            seed: self.seed,
            ..ForestParams::default()
        }
    }

    /// Survival-forest parameters for a dataset with `p` covariates.
    pub fn ert_params(&self, p: usize, seed: u64) -> Result<ErtParams, CliError> {
        Ok(ErtParams {
            n_trees: self.m_trees,
            k_try: self.k_try.unwrap_or(p + 1),
            min_events: self.n_min,
            t_max: self.study()?.t_max,
            seed,
        })
    }

    pub fn mistr_config(&self, p: usize) -> Result<MistrConfig, CliError> {
        let study = self.study()?;
        Ok(MistrConfig {
            rist: RistParams {
                ert: self.ert_params(p, 0)?,
                q_steps: self.q_steps,
                n_imputations: self.n_imputations,
                study,
            },
            forest: self.forest_params(),
            g: self.outcome()?,
            mode: if self.method == Method::MistrIv {
                EstimationMode::InstrumentalVariable
            } else {
                EstimationMode::Unconfounded
            },
            seeding: self.seeding,
            seed: self.seed,
        })
    }

    pub fn ipcw_params(&self, p: usize) -> Result<IpcwParams, CliError> {
        Ok(IpcwParams {
            kind: self.censoring_model,
            censoring: ErtParams {
                min_events: self.censoring_n_min,
                ..self.ert_params(p, derive_seed(self.seed, &[tag::CENSORING]))?
            },
            clamp: self.clamp,
            forest: self.forest_params(),
            instrumental: self.method == Method::IpcwIv,
        })
    }

    /// Checks the configuration against a loaded dataset.
    pub fn check_data(&self, ds: &SurvivalDataset) -> Result<(), CliError> {
        self.study()?;
        if self.method.is_iv() && ds.instrument().is_none() {
            return Err(CliError::Validation(format!(
                "method {} needs an instrument column; set `instrument_column` to the 0/1 instrument in the data",
                self.method
            )));
        }
        match self.method {
            Method::Mistr | Method::MistrIv => self.mistr_config(ds.p())?.validate(ds).map_err(CliError::from_core),
            Method::Ipcw | Method::IpcwIv => {
                let p = self.ipcw_params(ds.p())?;
                p.censoring.validate(ds.p() + 1).map_err(CliError::from_core)?;
                p.forest.validate().map_err(CliError::from_core)
            }
            Method::CfComplete => self.forest_params().validate().map_err(CliError::from_core),
        }
    }
}
