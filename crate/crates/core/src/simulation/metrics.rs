use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Mse,
    Mae,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Standard error of the mean; `None` with a single replication.
    pub sem: Option<f64>,
    pub per_replication: Vec<f64>,
}

impl MetricSummary {
    /// Scaled copy, e.g. `x100` for display.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            sem: self.sem.map(|s| s * factor),
            per_replication: self.per_replication.iter().map(|v| v * factor).collect(),
        }
    }
}

fn check(est: &[f64], truth: &[f64]) -> Result<()> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), got: est.len() });
    }
    if est.is_empty() {
        return Err(Error::InvalidData("no points to evaluate".into()));
    }
    Ok(())
}

pub fn mse(est: &[f64], truth: &[f64]) -> Result<f64> {
    check(est, truth)?;
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum::<f64>() / est.len() as f64)
}

pub fn mae(est: &[f64], truth: &[f64]) -> Result<f64> {
    check(est, truth)?;
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum::<f64>() / est.len() as f64)
}

/// Metric per replication, then mean and standard error across replications.
pub fn evaluate(estimates: &[Vec<f64>], truths: &[Vec<f64>], metric: Metric) -> Result<MetricSummary> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch { expected: truths.len(), got: estimates.len() });
    }
    if estimates.is_empty() {
        return Err(Error::InvalidData("no replications to evaluate".into()));
    }
    let per_replication = estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| match metric {
            Metric::Mse => mse(e, t),
            Metric::Mae => mae(e, t),
        })
        .collect::<Result<Vec<_>>>()?;
    let r = per_replication.len() as f64;
    let mean = per_replication.iter().sum::<f64>() / r;
    let sem = (per_replication.len() > 1).then(|| {
        let var = per_replication.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
        libm::sqrt(var / r)
    });
    Ok(MetricSummary { mean, sem, per_replication })
}
