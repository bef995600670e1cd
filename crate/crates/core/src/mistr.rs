//! Multiple imputation with recursively imputed survival trees feeding
//! causal (or instrumental) forests, pooled with Rubin's rule.

use alloc::vec::Vec;
use alloc::format;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::causal_forest::{fit_forest, CausalData, CausalForestModel, ForestKind, ForestParams};
use crate::data::{OutcomeTransform, SurvivalDataset};
use crate::matrix::Matrix;
use crate::rist::{rist_fit, Imputer, RistDiagnostics, RistModel, RistParams};
use crate::rng::{self, tag};
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimationMode {
    Unconfounded,
    InstrumentalVariable,
}

/// Seeds of the `A` causal forests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestSeeding {
    /// Every imputation's forest uses the same derived seed, so forests differ
    /// only through the imputed outcomes.
    Shared,
    /// Imputation `a` uses its own derived seed.
    PerImputation,
}

/// The seed fields inside `rist.ert` and `forest` are ignored: all seeds are
/// derived from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MistrConfig {
    pub rist: RistParams,
    pub forest: ForestParams,
    pub g: OutcomeTransform,
    pub mode: EstimationMode,
    pub seeding: ForestSeeding,
    pub seed: u64,
}

impl MistrConfig {
    pub fn validate(&self, ds: &SurvivalDataset) -> Result<()> {
        self.rist_params().validate(ds.p() + 1)?;
        self.forest.validate()?;
        if self.g.horizon != self.rist.study.horizon {
            return Err(Error::InvalidParameter(format!(
                "outcome horizon {} differs from study horizon {}",
                self.g.horizon, self.rist.study.horizon
            )));
        }
        if self.mode == EstimationMode::InstrumentalVariable && ds.instrument().is_none() {
            return Err(Error::InvalidData(
                "instrumental-variable mode needs an instrument column in the data".into(),
            ));
        }
        Ok(())
    }

    pub fn rist_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[tag::RIST])
    }

    pub fn imputation_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[tag::IMPUTATION])
    }

    /// Seed of the causal forest fitted to imputation `a`.
    pub fn forest_seed(&self, a: usize) -> u64 {
        match self.seeding {
            ForestSeeding::Shared => rng::derive_seed(self.seed, &[tag::FOREST]),
            ForestSeeding::PerImputation => rng::derive_seed(self.seed, &[tag::FOREST, a as u64]),
        }
    }

    pub fn rist_params(&self) -> RistParams {
        let mut p = self.rist;
        p.ert.seed = self.rist_seed();
        p
    }

    pub fn forest_params(&self, a: usize) -> ForestParams {
        ForestParams { seed: self.forest_seed(a), ..self.forest }
    }

    fn kind(&self) -> ForestKind {
        match self.mode {
            EstimationMode::Unconfounded => ForestKind::Causal,
            EstimationMode::InstrumentalVariable => ForestKind::Instrumental,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MistrDiagnostics {
    pub rist: RistDiagnostics,
    /// Effectively censored units imputed in every dataset.
    pub n_imputed: usize,
    /// Units imputed at `t_max` because their conditioning survival was 0.
    pub n_fallback: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MistrModel {
    config: MistrConfig,
    rist: RistModel,
    forests: Vec<CausalForestModel>,
    diagnostics: MistrDiagnostics,
}

/// Pooled estimate at one point. Variances are `None` when unavailable
/// (a single contributing imputation, or forests without variance).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MistrEstimate {
    pub tau: f64,
    pub within_var: Option<f64>,
    pub between_var: Option<f64>,
    pub total_var: Option<f64>,
    pub tau_per_imputation: Vec<f64>,
    /// Imputations excluded because their forest had no usable neighbourhood.
    pub n_excluded: usize,
}

/// Rubin's rule over `A` per-imputation estimates and their variances:
/// `total = mean(v) + (1 + 1/A) * var(tau)` with the sample variance
/// (divisor `A - 1`) between imputations.
pub fn pool_rubin(tau: &[f64], within: &[f64]) -> Result<MistrEstimate> {
    if tau.len() != within.len() {
        return Err(Error::LengthMismatch { expected: tau.len(), got: within.len() });
    }
    let v: Vec<Option<f64>> = within.iter().map(|&x| Some(x)).collect();
    pool(tau.to_vec(), &v, 0)
}

fn pool(tau: Vec<f64>, within: &[Option<f64>], n_excluded: usize) -> Result<MistrEstimate> {
    let a = tau.len();
    if a == 0 {
        return Err(Error::Estimation("every imputation was excluded at this point".into()));
    }
    let mean = tau.iter().sum::<f64>() / a as f64;
    let (mut within_var, mut between_var, mut total_var) = (None, None, None);
    if a >= 2 && within.iter().all(Option::is_some) {
        let v_bar = within.iter().map(|v| v.unwrap_or(0.0)).sum::<f64>() / a as f64;
        let b = tau.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (a as f64 - 1.0);
        within_var = Some(v_bar);
        between_var = Some(b);
        total_var = Some(v_bar + (1.0 + 1.0 / a as f64) * b);
    }
    Ok(MistrEstimate { tau: mean, within_var, between_var, total_var, tau_per_imputation: tau, n_excluded })
}

fn pool_forests<'a>(forests: impl Iterator<Item = &'a CausalForestModel>, x: &[f64]) -> Result<MistrEstimate> {
    let mut tau = Vec::new();
    let mut within = Vec::new();
    let mut excluded = 0;
    for f in forests {
        match f.predict(x) {
            Ok(e) => {
                tau.push(e.tau);
                within.push(e.variance);
            }
            Err(err) if excludable(&err) => excluded += 1,
            Err(err) => return Err(err),
        }
    }
    pool(tau, &within, excluded)
}

fn excludable(e: &Error) -> bool {
    matches!(e, Error::NoTreatmentVariation | Error::WeakInstrument | Error::Estimation(_))
}

fn imputed_data(ds: &SurvivalDataset, g: &OutcomeTransform, time: &[f64], mode: EstimationMode) -> Result<CausalData> {
    let y = time.iter().map(|&t| g.apply(t)).collect();
    let z = match mode {
        EstimationMode::Unconfounded => None,
        EstimationMode::InstrumentalVariable => ds.instrument().map(<[bool]>::to_vec),
    };
    CausalData::new(ds.covariates().clone(), y, ds.treatment().to_vec(), z)
}

fn prepare(ds: &SurvivalDataset, cfg: &MistrConfig) -> Result<RistModel> {
    cfg.validate(ds)?;
    rist_fit(ds, &cfg.rist_params())
}

fn diagnostics(rist: &RistModel, imputer: &Imputer<'_>, n_imputed: usize) -> MistrDiagnostics {
    MistrDiagnostics { rist: rist.diagnostics().clone(), n_imputed, n_fallback: imputer.n_fallback() }
}

pub fn mistr_fit(ds: &SurvivalDataset, cfg: &MistrConfig) -> Result<MistrModel> {
    let rist = prepare(ds, cfg)?;
    let study = cfg.rist.study;
    let imputer = Imputer::new(&rist, ds, study, cfg.imputation_seed())?;
    let forests = par::map_indexed(cfg.rist.n_imputations, |a| {
        let data = imputed_data(ds, &cfg.g, &imputer.capped_times(a), cfg.mode)?;
        fit_forest(&data, cfg.kind(), &cfg.forest_params(a))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let diagnostics = diagnostics(&rist, &imputer, imputer.n_imputed());
    Ok(MistrModel { config: *cfg, rist, forests, diagnostics })
}

pub fn mistr_predict(model: &MistrModel, x: &[f64]) -> Result<MistrEstimate> {
    model.predict(x)
}

/// `(within, between, total)` at `x`.
pub fn variance_components(model: &MistrModel, x: &[f64]) -> Result<(f64, f64, f64)> {
    components(&model.predict(x)?)
}

fn components(e: &MistrEstimate) -> Result<(f64, f64, f64)> {
    match (e.within_var, e.between_var, e.total_var) {
        (Some(w), Some(b), Some(t)) => Ok((w, b, t)),
        _ => Err(Error::VarianceUnavailable("variance needs at least two imputations with bag variances")),
    }
}

/// Fits imputation by imputation and keeps only the predictions at `queries`.
pub fn mistr_fit_predict(ds: &SurvivalDataset, cfg: &MistrConfig, queries: &Matrix) -> Result<StreamedFit> {
    if queries.n_cols() != ds.p() {
        return Err(Error::DimensionMismatch { expected: ds.p(), got: queries.n_cols() });
    }
    let rist = prepare(ds, cfg)?;
    let imputer = Imputer::new(&rist, ds, cfg.rist.study, cfg.imputation_seed())?;
    let per_imputation = par::map_indexed(cfg.rist.n_imputations, |a| -> Result<Vec<Result<(f64, Option<f64>)>>> {
        let data = imputed_data(ds, &cfg.g, &imputer.capped_times(a), cfg.mode)?;
        let forest = fit_forest(&data, cfg.kind(), &cfg.forest_params(a))?;
        Ok(queries.rows().map(|x| forest.predict(x).map(|e| (e.tau, e.variance))).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let estimates = (0..queries.n_rows())
        .map(|q| {
            let mut tau = Vec::new();
            let mut within = Vec::new();
            let mut excluded = 0;
            for preds in &per_imputation {
                match &preds[q] {
                    Ok((t, v)) => {
                        tau.push(*t);
                        within.push(*v);
                    }
                    Err(e) if excludable(e) => excluded += 1,
                    Err(e) => return Err(e.clone()),
                }
            }
            pool(tau, &within, excluded)
        })
        .collect();
    Ok(StreamedFit { estimates, diagnostics: diagnostics(&rist, &imputer, imputer.n_imputed()) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamedFit {
    pub estimates: Vec<Result<MistrEstimate>>,
    pub diagnostics: MistrDiagnostics,
}

impl MistrModel {
    pub fn config(&self) -> &MistrConfig {
        &self.config
    }

    pub fn rist(&self) -> &RistModel {
        &self.rist
    }

    pub fn forests(&self) -> &[CausalForestModel] {
        &self.forests
    }

    pub fn diagnostics(&self) -> &MistrDiagnostics {
        &self.diagnostics
    }

    pub fn n_covariates(&self) -> usize {
        self.rist.forest().n_covariates()
    }

    pub fn n_imputations(&self) -> usize {
        self.forests.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<MistrEstimate> {
        if x.len() != self.n_covariates() {
            return Err(Error::DimensionMismatch { expected: self.n_covariates(), got: x.len() });
        }
        pool_forests(self.forests.iter(), x)
    }

    pub fn predict_batch(&self, queries: &Matrix) -> Vec<Result<MistrEstimate>> {
        par::map_indexed(queries.n_rows(), |q| self.predict(queries.row(q)))
    }

    /// Reassembles a model from its parts (used when loading artifacts).
    pub fn from_parts(
        config: MistrConfig,
        rist: RistModel,
        forests: Vec<CausalForestModel>,
        diagnostics: MistrDiagnostics,
    ) -> Result<Self> {
        if forests.is_empty() {
            return Err(Error::InvalidParameter("a model needs at least one forest".into()));
        }
        Ok(Self { config, rist, forests, diagnostics })
    }
}

/// A model restricted to a subset of its imputations.
#[derive(Clone, Debug)]
pub struct MistrView<'a> {
    model: &'a MistrModel,
    indices: Vec<usize>,
}

impl MistrView<'_> {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn predict(&self, x: &[f64]) -> Result<MistrEstimate> {
        if x.len() != self.model.n_covariates() {
            return Err(Error::DimensionMismatch { expected: self.model.n_covariates(), got: x.len() });
        }
        pool_forests(self.indices.iter().map(|&a| &self.model.forests[a]), x)
    }

    pub fn variance_components(&self, x: &[f64]) -> Result<(f64, f64, f64)> {
        components(&self.predict(x)?)
    }
}

/// `k` of the `A` imputations drawn without replacement. `k = A` keeps the
/// original order.
pub fn subsample_imputations<'a, R: Rng + ?Sized>(
    model: &'a MistrModel,
    k: usize,
    rng: &mut R,
) -> Result<MistrView<'a>> {
    let a = model.n_imputations();
    if k == 0 || k > a {
        return Err(Error::InvalidParameter(format!("k must lie in 1..={a}, got {k}")));
    }
    let indices = if k == a { (0..a).collect() } else { rng::sample_without_replacement(rng, a, k) };
    Ok(MistrView { model, indices })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rubin_hand_example() {
        let e = pool_rubin(&[0.9, 1.0, 1.1], &[0.04, 0.04, 0.04]).unwrap();
        assert!((e.tau - 1.0).abs() < 1e-15);
        assert!((e.between_var.unwrap() - 0.01).abs() < 1e-15);
        assert!((e.total_var.unwrap() - (0.04 + 4.0 / 3.0 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn rubin_zero_spread_and_single() {
        let e = pool_rubin(&[1.0; 3], &[0.04; 3]).unwrap();
        assert_eq!(e.tau, 1.0);
        assert!((e.total_var.unwrap() - 0.04).abs() < 1e-15);
        let e = pool_rubin(&[2.0], &[0.1]).unwrap();
        assert_eq!(e.tau, 2.0);
        assert_eq!(e.total_var, None);
    }
}
