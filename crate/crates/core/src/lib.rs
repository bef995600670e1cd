//! Heterogeneous treatment effect estimation for right-censored survival data.
//!
//! The estimator imputes censored event times with recursively imputed
//! survival trees, fits one honest causal (or instrumental) forest per
//! imputed dataset and pools the per-imputation estimates with Rubin's rule.
//! The crate also carries the IPCW comparators, the simulation designs used
//! to benchmark them and the Monte Carlo truth oracles for those designs.
//!
//! The crate is `no_std` + `alloc`. All transcendental functions go through
//! [`libm`] so that generated data and fitted models are bit-identical across
//! platforms. The default `std` feature only adds rayon-backed parallelism;
//! every parallel loop derives its random stream from the item index, so
//! results never depend on the number of worker threads.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod baselines;
pub mod causal_forest;
pub mod curve;
pub mod data;
mod error;
pub mod matrix;
pub mod mistr;
mod par;
pub mod rist;
pub mod rng;
pub mod simulation;
pub mod survival_forest;

pub use baselines::{
    complete_case_estimate, fit_censoring_model, ipcw_estimate, ipcw_weights, CensoringKind,
    CensoringModel, IpcwModel, IpcwParams,
};
pub use causal_forest::{
    estimate_tau, estimate_tau_iv, estimate_variance, fit_causal_forest, fit_nuisances,
    weights_alpha, CausalData, CausalForestModel, CrossFitting, ForestKind, ForestParams,
    NuisanceEstimates,
};
pub use curve::SurvivalCurve;
pub use data::{
    apply_extra_censoring, effective_noncensoring, transform_outcome, ExtraCensoring, OutcomeKind,
    OutcomeTransform, StudyConfig, SurvivalDataset,
};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use mistr::{
    mistr_fit, mistr_fit_predict, mistr_predict, pool_rubin, subsample_imputations,
    variance_components, EstimationMode, ForestSeeding, MistrConfig, MistrEstimate, MistrModel,
    MistrView,
};
pub use rist::{impute_datasets, rist_fit, Imputation, RistDiagnostics, RistModel, RistParams};
pub use survival_forest::{
    conditional_residual_survival, fit_survival_forest, predict_survival, sample_event_time,
    ErtParams, SurvivalForest,
};
