//! Semi-simulation on user-supplied covariates:
//! `T~ ~ Poisson(30 + 0.75 (1 - W) [sum_k B_k + 0.75 A] - 0.45 W)` and
//! `C ~ Poisson(lambda_c)`, with five binary covariates `B_k` and one
//! continuous covariate `A` standardized to mean 0 and unit variance.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{assemble, LabeledSample, Unit};
use crate::data::is_binary_column;
use crate::matrix::Matrix;
use crate::rng::{self, tag};
use crate::{par, Error, Result};

pub const MIMIC_T_MAX: f64 = 29.0;
pub const MIMIC_HORIZON: f64 = 28.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MimicColumns {
    pub binary: [usize; 5],
    pub continuous: usize,
}

impl Default for MimicColumns {
    fn default() -> Self {
        Self { binary: [0, 1, 2, 3, 4], continuous: 5 }
    }
}

/// Failure-time rate; `age` is the standardized continuous covariate.
pub fn mimic_lambda_f(binary: &[f64; 5], age: f64, w: bool) -> f64 {
    let wf = if w { 1.0 } else { 0.0 };
    30.0 + 0.75 * (1.0 - wf) * (binary.iter().sum::<f64>() + 0.75 * age) - 0.45 * wf
}

/// Returns the sample with the continuous column replaced by its
/// standardized version.
/// Follow-up ends at `follow_up` (use [`MIMIC_T_MAX`], or infinity to disable).
pub fn mimic_formula_sample(
    covariates: &Matrix,
    columns: &MimicColumns,
    lambda_c: f64,
    follow_up: f64,
    seed: u64,
) -> Result<LabeledSample> {
    let p = covariates.n_cols();
    let n = covariates.n_rows();
    if p < 6 {
        return Err(Error::InvalidData(format!("need at least 6 covariate columns, got {p}")));
    }
    for &j in columns.binary.iter().chain(core::iter::once(&columns.continuous)) {
        if j >= p {
            return Err(Error::InvalidParameter(format!("column {j} out of range for {p} covariates")));
        }
    }
    for &j in &columns.binary {
        if !is_binary_column(covariates, j) {
            return Err(Error::InvalidData(format!("column {j} must be binary")));
        }
    }
    if !(lambda_c > 0.0 && lambda_c.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda_c must be positive, got {lambda_c}")));
    }
    let age = covariates.column(columns.continuous);
    let mean = age.iter().sum::<f64>() / n as f64;
    let sd = libm::sqrt(age.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n as f64 - 1.0));
    if !(sd > 0.0) {
        return Err(Error::InvalidData(format!("column {} is constant", columns.continuous)));
    }
    let units = par::map_indexed(n, |i| {
        let mut rng = rng::stream(seed, &[tag::GENERATOR, i as u64]);
        let mut x = covariates.row(i).to_vec();
        x[columns.continuous] = (x[columns.continuous] - mean) / sd;
        let b = columns.binary.map(|j| x[j]);
        let w = rng::bernoulli(&mut rng, 0.5);
        let t = rng::poisson_quantile(mimic_lambda_f(&b, x[columns.continuous], w), rng::uniform(&mut rng)) as f64;
        let c = rng::poisson_quantile(lambda_c, rng::uniform(&mut rng)) as f64;
        Unit { x, hidden: Vec::new(), w, z: None, t, c }
    });
    assemble(units, p, 0, follow_up)
}

/// Exact `E[min(T1, h)] - E[min(T0, h)]` at one unit, via the Poisson CDF:
/// `E[min(T, h)] = sum_{k < h} P(T > k)` for integer `h`.
pub fn mimic_true_cate(binary: &[f64; 5], age: f64, horizon: u32) -> f64 {
    let rmst = |lambda: f64| {
        let mut p = libm::exp(-lambda);
        let mut cdf = p;
        let mut total = 0.0;
        for k in 0..horizon {
            total += 1.0 - cdf;
            p *= lambda / (k + 1) as f64;
            cdf += p;
        }
        total
    };
    rmst(mimic_lambda_f(binary, age, true)) - rmst(mimic_lambda_f(binary, age, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_value() {
        assert!((mimic_lambda_f(&[0.0; 5], 0.0, true) - 29.55).abs() < 1e-12);
        assert!((mimic_lambda_f(&[1.0; 5], 0.0, false) - 33.75).abs() < 1e-12);
    }
}
