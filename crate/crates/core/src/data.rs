//! Domain types: datasets, outcome transforms and the study horizon.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::{self, tag};
use crate::{Error, Result};

/// Right-censored observational data: covariates `X`, binary treatment `W`,
/// optional binary instrument `Z`, observed time `T = min(T~, C)` and event
/// indicator `delta = I(T~ <= C)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    covariates: Matrix,
    covariate_names: Vec<String>,
    treatment: Vec<bool>,
    instrument: Option<Vec<bool>>,
    time: Vec<f64>,
    event: Vec<bool>,
}

impl SurvivalDataset {
    pub fn new(
        covariates: Matrix,
        treatment: Vec<bool>,
        instrument: Option<Vec<bool>>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let names = (1..=covariates.n_cols()).map(|j| format!("x{j}")).collect();
        Self::with_names(covariates, names, treatment, instrument, time, event)
    }

    pub fn with_names(
        covariates: Matrix,
        covariate_names: Vec<String>,
        treatment: Vec<bool>,
        instrument: Option<Vec<bool>>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let n = covariates.n_rows();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if covariates.n_cols() < 1 {
            return Err(Error::InvalidData("need at least one covariate".into()));
        }
        if covariate_names.len() != covariates.n_cols() {
            return Err(Error::LengthMismatch { expected: covariates.n_cols(), got: covariate_names.len() });
        }
        for (name, len) in [("treatment", treatment.len()), ("time", time.len()), ("event", event.len())] {
            if len != n {
                return Err(Error::InvalidData(format!("{name} has {len} rows, covariates have {n}")));
            }
        }
        if let Some(z) = &instrument {
            if z.len() != n {
                return Err(Error::InvalidData(format!("instrument has {} rows, covariates have {n}", z.len())));
            }
        }
        if let Some(i) = time.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidData(format!("row {i}: time {} is not a nonnegative finite number", time[i])));
        }
        if let Some(k) = covariates.as_slice().iter().position(|v| !v.is_finite()) {
            let p = covariates.n_cols();
            return Err(Error::InvalidData(format!("row {}, covariate {}: non-finite value", k / p, k % p)));
        }
        Ok(Self { covariates, covariate_names, treatment, instrument, time, event })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.time.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.covariates.n_cols()
    }

    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn instrument(&self) -> Option<&[bool]> {
        self.instrument.as_deref()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn censoring_rate(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.n() as f64
    }

    /// Same units with replaced outcomes.
    pub fn with_outcomes(&self, time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        Self::with_names(
            self.covariates.clone(),
            self.covariate_names.clone(),
            self.treatment.clone(),
            self.instrument.clone(),
            time,
            event,
        )
    }

    pub fn with_instrument(&self, instrument: Option<Vec<bool>>) -> Result<Self> {
        Self::with_names(
            self.covariates.clone(),
            self.covariate_names.clone(),
            self.treatment.clone(),
            instrument,
            self.time.clone(),
            self.event.clone(),
        )
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::with_names(
            self.covariates.select_rows(idx),
            self.covariate_names.clone(),
            idx.iter().map(|&i| self.treatment[i]).collect(),
            self.instrument.as_ref().map(|z| idx.iter().map(|&i| z[i]).collect()),
            idx.iter().map(|&i| self.time[i]).collect(),
            idx.iter().map(|&i| self.event[i]).collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    /// `g(t) = min(t, h)`: differences are RMST differences.
    Rmst,
    /// `g(t) = I(t >= h)`: differences are survival-probability differences.
    SurvivalIndicator,
}

/// Outcome transform `g` with a finite horizon: `g(t) = g(h)` for `t >= h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTransform {
    pub kind: OutcomeKind,
    pub horizon: f64,
}

impl OutcomeTransform {
    pub fn new(kind: OutcomeKind, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { kind, horizon })
    }

    pub fn rmst(horizon: f64) -> Result<Self> {
        Self::new(OutcomeKind::Rmst, horizon)
    }

    #[inline]
    pub fn apply(&self, t: f64) -> f64 {
        transform_outcome(self, t)
    }
}

#[inline]
pub fn transform_outcome(g: &OutcomeTransform, t: f64) -> f64 {
    match g.kind {
        OutcomeKind::Rmst => t.min(g.horizon),
        OutcomeKind::SurvivalIndicator => {
            if t >= g.horizon {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Effective non-censoring indicator: a censored unit that reached the
/// horizon while still at risk carries full information for the estimand.
#[inline]
pub fn effective_noncensoring(t_observed: f64, event: bool, horizon: f64) -> bool {
    event || t_observed >= horizon
}

/// Maximum imputation time and estimand horizon, `0 < h <= t_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub t_max: f64,
    pub horizon: f64,
}

impl StudyConfig {
    pub fn new(t_max: f64, horizon: f64) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max must be positive, got {t_max}")));
        }
        if !(horizon > 0.0 && horizon <= t_max) {
            return Err(Error::InvalidParameter(format!(
                "horizon must satisfy 0 < h <= t_max, got h = {horizon}, t_max = {t_max}"
            )));
        }
        Ok(Self { t_max, horizon })
    }
}

/// Covariate-driven additional censoring.
///
/// Unit `i` is selected with probability `p0 + p1 * driver_i`; a selected unit
/// gets a new censoring time drawn uniformly on
/// `[lower, min(T_i, floor(fraction * t_max))]` and loses its event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtraCensoring {
    pub driver: usize,
    pub p0: f64,
    pub p1: f64,
    pub fraction: f64,
    pub lower: f64,
    /// Follow-up length; `None` uses the largest observed time.
    pub t_max: Option<f64>,
}

impl ExtraCensoring {
    pub fn new(driver: usize, p0: f64, p1: f64, fraction: f64) -> Self {
        Self { driver, p0, p1, fraction, lower: 1.0, t_max: None }
    }
}

pub fn apply_extra_censoring(ds: &SurvivalDataset, cfg: &ExtraCensoring, seed: u64) -> Result<SurvivalDataset> {
    if cfg.driver >= ds.p() {
        return Err(Error::InvalidParameter(format!("driver column {} out of range", cfg.driver)));
    }
    if !(cfg.p0 >= 0.0 && cfg.p1 >= 0.0 && cfg.p0 + cfg.p1 <= 1.0) {
        return Err(Error::InvalidParameter("need p0 >= 0, p1 >= 0 and p0 + p1 <= 1".into()));
    }
    if !(cfg.fraction > 0.0 && cfg.fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("fraction must lie in (0, 1], got {}", cfg.fraction)));
    }
    let driver = ds.covariates().column(cfg.driver);
    if let Some(i) = driver.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidData(format!(
            "row {i}: driver column {} is not binary (value {})",
            cfg.driver, driver[i]
        )));
    }
    let t_max = cfg.t_max.unwrap_or_else(|| ds.time().iter().copied().fold(0.0, f64::max));
    let cap = libm::floor(cfg.fraction * t_max);

    let mut rng = rng::stream(seed, &[tag::EXTRA_CENSORING]);
    let mut time = ds.time().to_vec();
    let mut event = ds.event().to_vec();
    for i in 0..ds.n() {
        // Both draws are always consumed so unit i's stream position does not
        // depend on earlier selections.
        let select = rng::uniform(&mut rng) < cfg.p0 + cfg.p1 * driver[i];
        let u = rng::uniform(&mut rng);
        if select {
            let hi = time[i].min(cap);
            let lo = cfg.lower.min(hi);
            time[i] = (lo + (hi - lo) * u).min(time[i]);
            event[i] = false;
        }
    }
    ds.with_outcomes(time, event)
}

/// Binary covariate check used by generators and transforms.
pub(crate) fn is_binary_column(m: &Matrix, j: usize) -> bool {
    m.rows().all(|r| r[j] == 0.0 || r[j] == 1.0)
}

pub(crate) fn bools_to_f64(v: &[bool]) -> Vec<f64> {
    v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}
