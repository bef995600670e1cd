//! Recursively imputed survival trees and multiple imputation of censored
//! event times.

use alloc::vec::Vec;
use alloc::{format, vec};
use serde::{Deserialize, Serialize};

use crate::data::{StudyConfig, SurvivalDataset};
use crate::rng::{self, tag};
use crate::survival_forest::{self, ErtParams, Features, SurvivalForest};
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RistParams {
    pub ert: ErtParams,
    /// Recursion steps `Q`.
    pub q_steps: usize,
    /// Imputed datasets `A`.
    pub n_imputations: usize,
    pub study: StudyConfig,
}

impl RistParams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        self.ert.validate(n_features)?;
        if self.n_imputations == 0 {
            return Err(Error::InvalidParameter("number of imputations must be at least 1".into()));
        }
        if self.ert.t_max != self.study.t_max {
            return Err(Error::InvalidParameter(format!(
                "forest t_max {} differs from study t_max {}",
                self.ert.t_max, self.study.t_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RistDiagnostics {
    /// Effectively censored units imputed at each recursion step.
    pub imputed_per_step: Vec<usize>,
    /// Units whose conditioning survival was 0, imputed at `t_max` instead.
    pub fallback_per_step: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RistModel {
    forest: SurvivalForest,
    t_max: f64,
    diagnostics: RistDiagnostics,
}

impl RistModel {
    pub fn forest(&self) -> &SurvivalForest {
        &self.forest
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn diagnostics(&self) -> &RistDiagnostics {
        &self.diagnostics
    }
}

/// One complete dataset: times capped at `h`, every unit marked observed.
#[derive(Clone, Debug, PartialEq)]
pub struct Imputation {
    pub dataset: SurvivalDataset,
    /// `I(T_ia <= h)`, kept for diagnostics only.
    pub horizon_event: Vec<bool>,
    pub n_imputed: usize,
    pub n_fallback: usize,
}

/// Residual law of one censored unit on the forest grid.
struct Residual {
    unit: usize,
    /// First grid index strictly after the censoring time.
    start: usize,
    s_c: f64,
    tail: Vec<f64>,
}

impl Residual {
    fn draw(&self, grid: &[f64], t_max: f64, u: f64) -> f64 {
        if !(self.s_c > 0.0) {
            return t_max;
        }
        let v = 1.0 - u;
        let k = self.tail.partition_point(|&s| (s / self.s_c).clamp(0.0, 1.0) >= v);
        match grid.get(self.start + k) {
            Some(&t) if t <= t_max => t,
            _ => t_max,
        }
    }
}

/// Units with `event = 0` and `time < t_max`.
fn censored_units(time: &[f64], event: &[bool], t_max: f64) -> Vec<usize> {
    (0..time.len()).filter(|&i| !event[i] && time[i] < t_max).collect()
}

fn residuals(forest: &SurvivalForest, ds: &SurvivalDataset, time: &[f64], units: &[usize]) -> Vec<Residual> {
    let grid = forest.grid();
    par::map_indexed(units.len(), |k| {
        let i = units[k];
        let c = time[i];
        let values = forest.predict_values(ds.covariates().row(i), ds.treatment()[i]);
        let start = grid.partition_point(|&g| g <= c);
        let s_c = if start == 0 { 1.0 } else { values[start - 1] };
        Residual { unit: i, start, s_c, tail: values[start..].to_vec() }
    })
}

pub fn rist_fit(ds: &SurvivalDataset, params: &RistParams) -> Result<RistModel> {
    params.validate(ds.p() + 1)?;
    let ert = params.ert;
    let t_max = params.study.t_max;
    let mut forest = survival_forest::fit_on(ds.covariates(), ds.treatment(), ds.time(), ds.event(), &ert)?;
    let features = Features { x: ds.covariates(), w: ds.treatment() };
    let units = censored_units(ds.time(), ds.event(), t_max);
    let mut diagnostics = RistDiagnostics::default();

    for q in 0..params.q_steps {
        let res = residuals(&forest, ds, ds.time(), &units);
        let fallbacks = res.iter().filter(|r| !(r.s_c > 0.0)).count();
        let grid = forest.grid().to_vec();
        let trees = par::map_indexed(ert.n_trees, |m| {
            let step = q as u64 + 1;
            let mut draw_rng = rng::stream(ert.seed, &[tag::RIST_STEP, step, m as u64, 0]);
            let mut tree_rng = rng::stream(ert.seed, &[tag::RIST_STEP, step, m as u64, 1]);
            let mut time = ds.time().to_vec();
            let mut event = ds.event().to_vec();
            for r in &res {
                time[r.unit] = r.draw(&grid, t_max, rng::uniform(&mut draw_rng));
                event[r.unit] = true;
            }
            survival_forest::grow_tree(features, &time, &event, &grid, &ert, &mut tree_rng)
        });
        forest = SurvivalForest::from_trees(grid, ds.p(), trees);
        diagnostics.imputed_per_step.push(units.len());
        diagnostics.fallback_per_step.push(fallbacks);
    }
    Ok(RistModel { forest, t_max, diagnostics })
}

/// Precomputed residual laws for repeated imputation of one dataset.
pub(crate) struct Imputer<'a> {
    model: &'a RistModel,
    ds: &'a SurvivalDataset,
    study: StudyConfig,
    seed: u64,
    residuals: Vec<Residual>,
}

impl<'a> Imputer<'a> {
    pub(crate) fn new(model: &'a RistModel, ds: &'a SurvivalDataset, study: StudyConfig, seed: u64) -> Result<Self> {
        if ds.p() != model.forest.n_covariates() {
            return Err(Error::SchemaMismatch(format!(
                "model trained on {} covariates, dataset has {}",
                model.forest.n_covariates(),
                ds.p()
            )));
        }
        let units = censored_units(ds.time(), ds.event(), study.t_max);
        let residuals = residuals(&model.forest, ds, ds.time(), &units);
        Ok(Self { model, ds, study, seed, residuals })
    }

    pub(crate) fn n_imputed(&self) -> usize {
        self.residuals.len()
    }

    pub(crate) fn n_fallback(&self) -> usize {
        self.residuals.iter().filter(|r| !(r.s_c > 0.0)).count()
    }

    /// Uncapped times of imputation `a`.
    pub(crate) fn draw_times(&self, a: usize) -> Vec<f64> {
        let mut rng = rng::stream(self.seed, &[tag::IMPUTATION, a as u64]);
        let grid = self.model.forest.grid();
        let mut time = self.ds.time().to_vec();
        for r in &self.residuals {
            time[r.unit] = r.draw(grid, self.study.t_max, rng::uniform(&mut rng));
        }
        time
    }

    /// Times of imputation `a` capped at the horizon.
    pub(crate) fn capped_times(&self, a: usize) -> Vec<f64> {
        let h = self.study.horizon;
        self.draw_times(a).into_iter().map(|t| t.min(h)).collect()
    }

    pub(crate) fn imputation(&self, a: usize) -> Result<Imputation> {
        let h = self.study.horizon;
        let raw = self.draw_times(a);
        let horizon_event = raw.iter().map(|&t| t <= h).collect();
        let time = raw.into_iter().map(|t| t.min(h)).collect();
        let dataset = self.ds.with_outcomes(time, vec![true; self.ds.n()])?;
        Ok(Imputation {
            dataset,
            horizon_event,
            n_imputed: self.residuals.len(),
            n_fallback: self.n_fallback(),
        })
    }
}

/// `A` complete datasets: each effectively censored unit gets an independent
/// draw from its conditional residual survival under the final ensemble.
pub fn impute_datasets(
    model: &RistModel,
    ds: &SurvivalDataset,
    n_imputations: usize,
    study: &StudyConfig,
    seed: u64,
) -> Result<Vec<Imputation>> {
    if n_imputations == 0 {
        return Err(Error::InvalidParameter("number of imputations must be at least 1".into()));
    }
    let imputer = Imputer::new(model, ds, *study, seed)?;
    par::map_indexed(n_imputations, |a| imputer.imputation(a)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn toy() -> SurvivalDataset {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| (i % 7) as f64 / 7.0).collect();
        let time: Vec<f64> = (0..n).map(|i| 1.0 + (i * 37 % 11) as f64 * 0.7).collect();
        let event: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
        let w: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        SurvivalDataset::new(Matrix::new(n, 1, x).unwrap(), w, None, time, event).unwrap()
    }

    fn params(q: usize) -> RistParams {
        let study = StudyConfig::new(6.0, 5.0).unwrap();
        RistParams {
            ert: ErtParams { n_trees: 8, k_try: 2, min_events: 3, t_max: 6.0, seed: 3 },
            q_steps: q,
            n_imputations: 4,
            study,
        }
    }

    #[test]
    fn q0_is_initial_ensemble() {
        let ds = toy();
        let m = rist_fit(&ds, &params(0)).unwrap();
        let f = survival_forest::fit_survival_forest(&ds, &params(0).ert).unwrap();
        assert_eq!(m.forest(), &f);
    }

    #[test]
    fn recursion_keeps_size_and_support() {
        let ds = toy();
        let p = params(2);
        let m = rist_fit(&ds, &p).unwrap();
        assert_eq!(m.forest().n_trees(), 8);
        assert_eq!(m.diagnostics().imputed_per_step.len(), 2);
        let imps = impute_datasets(&m, &ds, 4, &p.study, 9).unwrap();
        let imputer = Imputer::new(&m, &ds, p.study, 9).unwrap();
        for (a, imp) in imps.iter().enumerate() {
            let raw = imputer.draw_times(a);
            for i in 0..ds.n() {
                if ds.event()[i] {
                    assert_eq!(imp.dataset.time()[i], ds.time()[i].min(5.0));
                } else if ds.time()[i] < 6.0 {
                    assert!(raw[i] > ds.time()[i] && raw[i] <= 6.0);
                }
            }
            assert!(imp.dataset.event().iter().all(|&e| e));
        }
    }
}
