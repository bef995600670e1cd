//! The closed-form estimates solve the weighted score equations; checked
//! against the score itself and against a bisection root finder.

use mistr_core::causal_forest::fit_forest;
use mistr_core::simulation::{generate_with, GeneratorOptions, SettingId};
use mistr_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn complete_data(instrument_is_treatment: bool) -> CausalData {
    let opts = GeneratorOptions { censoring: false, ..Default::default() };
    let s = generate_with(SettingId::Standard(4), 600, 11, &opts).unwrap();
    let g = OutcomeTransform::rmst(3.0).unwrap();
    let d = CausalData::from_dataset(&s.data, &g).unwrap();
    if instrument_is_treatment {
        CausalData::new(d.x().clone(), d.y().to_vec(), d.w().to_vec(), Some(d.w().to_vec())).unwrap()
    } else {
        d
    }
}

fn params() -> ForestParams {
    ForestParams { n_trees: 80, ell: 4, seed: 5, ..Default::default() }
}

fn score(alpha: &[f64], z: &[f64], y: &[f64], w: &[f64], tau: f64) -> f64 {
    (0..alpha.len()).map(|i| alpha[i] * z[i] * (y[i] - tau * w[i])).sum()
}

/// Root of a monotone function on a bracket grown until the sign changes.
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo).signum() == f(hi).signum() {
        lo *= 2.0;
        hi *= 2.0;
        assert!(hi < 1e12, "no sign change");
    }
    let rising = f(hi) > f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn queries(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect()
}

#[test]
fn causal_estimate_zeroes_the_score() {
    let data = complete_data(false);
    let model = fit_forest(&data, ForestKind::Causal, &params()).unwrap();
    let (w, z, y) = model.residuals();
    for x in queries(100, data.p(), 1) {
        let tau = estimate_tau(&model, &x).unwrap();
        let alpha = weights_alpha(&model, &x).unwrap();
        assert!(score(&alpha, z, y, w, tau).abs() <= 1e-10);
        assert!(model.score_residual(&x, tau).unwrap().abs() <= 1e-10);
    }
}

#[test]
fn causal_estimate_matches_bisection() {
    let data = complete_data(false);
    let model = fit_forest(&data, ForestKind::Causal, &params()).unwrap();
    let (w, z, y) = model.residuals();
    for x in queries(20, data.p(), 2) {
        let alpha = weights_alpha(&model, &x).unwrap();
        let root = bisect(|t| score(&alpha, z, y, w, t));
        let tau = estimate_tau(&model, &x).unwrap();
        assert!((tau - root).abs() <= 1e-8, "tau {tau} root {root}");
    }
}

#[test]
fn instrumental_estimate_with_instrument_equal_to_treatment() {
    let data = complete_data(true);
    let model = fit_forest(&data, ForestKind::Instrumental, &params()).unwrap();
    let (w, z, y) = model.residuals();
    for (k, x) in queries(100, data.p(), 3).into_iter().enumerate() {
        let tau = estimate_tau_iv(&model, &x).unwrap();
        assert!(model.score_residual(&x, tau).unwrap().abs() <= 1e-10);
        if k < 20 {
            let alpha = weights_alpha(&model, &x).unwrap();
            let root = bisect(|t| score(&alpha, z, y, w, t));
            assert!((tau - root).abs() <= 1e-8);
        }
    }
    assert!(estimate_tau(&model, &[0.5; 5]).is_err());
}

#[test]
fn weights_sum_to_one() {
    let data = complete_data(false);
    let model = fit_forest(&data, ForestKind::Causal, &params()).unwrap();
    for x in queries(1000, data.p(), 4) {
        let alpha = weights_alpha(&model, &x).unwrap();
        assert!(alpha.iter().all(|a| *a >= 0.0));
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn tau_is_affine_equivariant_in_the_outcome() {
    // y -> 2y scales every residual and split criterion exactly, so the
    // forest is unchanged and tau doubles bit for bit
    let data = complete_data(false);
    let shifted = data.with_outcome(data.y().iter().map(|y| 2.0 * y).collect()).unwrap();
    let p = ForestParams { n_trees: 40, ell: 4, seed: 9, ..Default::default() };
    let m1 = fit_forest(&data, ForestKind::Causal, &p).unwrap();
    let m2 = fit_forest(&shifted, ForestKind::Causal, &p).unwrap();
    assert_eq!(m1.leaf_counts(), m2.leaf_counts());
    for x in queries(50, data.p(), 5) {
        let t1 = estimate_tau(&m1, &x).unwrap();
        let t2 = estimate_tau(&m2, &x).unwrap();
        assert_eq!(t2, 2.0 * t1);
    }
}
