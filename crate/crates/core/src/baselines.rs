//! Comparators: inverse-probability-of-censoring weighted forests and the
//! complete-case forest.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::causal_forest::{fit_forest, CausalData, CausalForestModel, ForestKind, ForestParams, PointEstimate};
use crate::curve::{kaplan_meier, SurvivalCurve};
use crate::data::{effective_noncensoring, OutcomeTransform, SurvivalDataset};
use crate::survival_forest::{self, ErtParams, SurvivalForest};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CensoringKind {
    /// Kaplan-Meier of the censoring times, ignoring covariates.
    KaplanMeierMarginal,
    /// Survival forest of the censoring times given `(X, W)`.
    SurvivalForestConditional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Fit {
    /// No censored unit: `S_C = 1`.
    One,
    Marginal(SurvivalCurve),
    Conditional(SurvivalForest),
}

/// Estimate of `P(C > t | X, W)`, fitted with the event roles reversed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoringModel {
    kind: CensoringKind,
    fit: Fit,
}

impl CensoringModel {
    pub fn kind(&self) -> CensoringKind {
        self.kind
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self.fit, Fit::One)
    }

    pub fn curve(&self, x: &[f64], w: bool) -> Result<SurvivalCurve> {
        match &self.fit {
            Fit::One => Ok(SurvivalCurve::constant_one()),
            Fit::Marginal(c) => Ok(c.clone()),
            Fit::Conditional(f) => f.predict(x, w),
        }
    }

    /// `S_C(t-)`.
    pub fn survival_before(&self, x: &[f64], w: bool, t: f64) -> Result<f64> {
        match &self.fit {
            Fit::One => Ok(1.0),
            Fit::Marginal(c) => Ok(c.left_limit(t)),
            Fit::Conditional(f) => f.predict(x, w).map(|c| c.left_limit(t)),
        }
    }
}

/// `params` configures the conditional forest (`min_events` counts censoring
/// events there). With fewer censored units than `params.min_events` the
/// conditional kind falls back to the marginal estimate.
pub fn fit_censoring_model(ds: &SurvivalDataset, kind: CensoringKind, params: &ErtParams) -> Result<CensoringModel> {
    let reversed: Vec<bool> = ds.event().iter().map(|&e| !e).collect();
    let n_censored = reversed.iter().filter(|&&c| c).count();
    let fit = if n_censored == 0 {
        Fit::One
    } else {
        match kind {
            CensoringKind::SurvivalForestConditional if n_censored >= params.min_events => Fit::Conditional(
                survival_forest::fit_on(ds.covariates(), ds.treatment(), ds.time(), &reversed, params)?,
            ),
            _ => Fit::Marginal(kaplan_meier(ds.time(), &reversed)),
        }
    };
    Ok(CensoringModel { kind, fit })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpcwWeights {
    pub weights: Vec<f64>,
    /// Units whose weight hit the clamp (including `S_C = 0`).
    pub n_clamped: usize,
}

/// `delta^h / S_C((T ^ h)-)`, capped at `clamp`.
pub fn ipcw_weights(model: &CensoringModel, ds: &SurvivalDataset, g: &OutcomeTransform, clamp: f64) -> Result<IpcwWeights> {
    if !(clamp >= 1.0) {
        return Err(Error::InvalidParameter(format!("weight clamp must be at least 1, got {clamp}")));
    }
    let h = g.horizon;
    let mut weights = Vec::with_capacity(ds.n());
    let mut n_clamped = 0;
    for i in 0..ds.n() {
        let t = ds.time()[i];
        if !effective_noncensoring(t, ds.event()[i], h) {
            weights.push(0.0);
            continue;
        }
        let s = model.survival_before(ds.covariates().row(i), ds.treatment()[i], t.min(h))?;
        if s > 0.0 && 1.0 / s <= clamp {
            weights.push(1.0 / s);
        } else {
            weights.push(clamp);
            n_clamped += 1;
        }
    }
    Ok(IpcwWeights { weights, n_clamped })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpcwParams {
    pub kind: CensoringKind,
    pub censoring: ErtParams,
    pub clamp: f64,
    pub forest: ForestParams,
    pub instrumental: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpcwModel {
    censoring: CensoringModel,
    forest: CausalForestModel,
    n_clamped: usize,
    n_used: usize,
}

impl IpcwModel {
    pub fn censoring(&self) -> &CensoringModel {
        &self.censoring
    }

    pub fn forest(&self) -> &CausalForestModel {
        &self.forest
    }

    pub fn n_clamped(&self) -> usize {
        self.n_clamped
    }

    /// Effectively uncensored units the forest was fitted on.
    pub fn n_used(&self) -> usize {
        self.n_used
    }

    pub fn predict(&self, x: &[f64]) -> Result<PointEstimate> {
        self.forest.predict(x)
    }
}

fn kind_of(instrumental: bool, ds: &SurvivalDataset) -> Result<ForestKind> {
    if !instrumental {
        return Ok(ForestKind::Causal);
    }
    if ds.instrument().is_none() {
        return Err(Error::InvalidData("instrumental estimation needs an instrument column in the data".into()));
    }
    Ok(ForestKind::Instrumental)
}

fn uncensored_data(ds: &SurvivalDataset, g: &OutcomeTransform, weights: Option<&[f64]>, instrumental: bool) -> Result<(CausalData, usize)> {
    let keep: Vec<usize> = (0..ds.n())
        .filter(|&i| effective_noncensoring(ds.time()[i], ds.event()[i], g.horizon))
        .collect();
    if keep.len() < 2 {
        return Err(Error::Estimation(format!("only {} effectively uncensored units", keep.len())));
    }
    let sub = ds.select_rows(&keep)?;
    let sub = if instrumental { sub } else { sub.with_instrument(None)? };
    let mut data = CausalData::from_dataset(&sub, g)?;
    if let Some(w) = weights {
        data = data.with_weights(keep.iter().map(|&i| w[i]).collect())?;
    }
    Ok((data, keep.len()))
}

/// Weighted causal (or instrumental) forest on the effectively uncensored
/// units, weighted by their inverse censoring probabilities.
pub fn ipcw_estimate(ds: &SurvivalDataset, g: &OutcomeTransform, params: &IpcwParams) -> Result<IpcwModel> {
    let kind = kind_of(params.instrumental, ds)?;
    let censoring = fit_censoring_model(ds, params.kind, &params.censoring)?;
    let w = ipcw_weights(&censoring, ds, g, params.clamp)?;
    let (data, n_used) = uncensored_data(ds, g, Some(&w.weights), params.instrumental)?;
    let forest = fit_forest(&data, kind, &params.forest)?;
    Ok(IpcwModel { censoring, forest, n_clamped: w.n_clamped, n_used })
}

/// Unweighted forest on the effectively uncensored units.
pub fn complete_case_estimate(
    ds: &SurvivalDataset,
    g: &OutcomeTransform,
    forest: &ForestParams,
    instrumental: bool,
) -> Result<CausalForestModel> {
    let kind = kind_of(instrumental, ds)?;
    let (data, _) = uncensored_data(ds, g, None, instrumental)?;
    fit_forest(&data, kind, forest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn ert() -> ErtParams {
        ErtParams { n_trees: 4, k_try: 1, min_events: 1, t_max: 10.0, seed: 1 }
    }

    #[test]
    fn marginal_reversed_km_drops_to_zero() {
        let x = Matrix::new(3, 1, alloc::vec![0.0; 3]).unwrap();
        let ds = SurvivalDataset::new(x, alloc::vec![true, false, true], None, alloc::vec![5.0; 3], alloc::vec![false; 3]).unwrap();
        let m = fit_censoring_model(&ds, CensoringKind::KaplanMeierMarginal, &ert()).unwrap();
        assert_eq!(m.survival_before(&[0.0], true, 5.0).unwrap(), 1.0);
        assert_eq!(m.curve(&[0.0], true).unwrap().eval(5.0), 0.0);
    }

    #[test]
    fn weights_reciprocal_and_clamp() {
        // Censoring at t=1 among 2 at risk: S_C = 0.5 after t=1.
        let x = Matrix::new(2, 1, alloc::vec![0.0; 2]).unwrap();
        let ds = SurvivalDataset::new(x, alloc::vec![true, false], None, alloc::vec![1.0, 2.0], alloc::vec![false, true]).unwrap();
        let m = fit_censoring_model(&ds, CensoringKind::KaplanMeierMarginal, &ert()).unwrap();
        let g = OutcomeTransform::rmst(5.0).unwrap();
        let w = ipcw_weights(&m, &ds, &g, 20.0).unwrap();
        assert_eq!(w.weights, alloc::vec![0.0, 2.0]);
        let w = ipcw_weights(&m, &ds, &g, 1.5).unwrap();
        assert_eq!(w.weights, alloc::vec![0.0, 1.5]);
        assert_eq!(w.n_clamped, 1);
    }
}
