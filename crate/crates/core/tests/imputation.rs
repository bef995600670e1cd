use mistr_core::simulation::{self, generate, SettingId};
use mistr_core::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two-sided Kolmogorov-Smirnov distance between draws and a discrete law
/// with support `points` and CDF `cdf`.
fn ks_distance(draws: &[f64], points: &[f64], cdf: &[f64]) -> f64 {
    let n = draws.len() as f64;
    points
        .iter()
        .zip(cdf)
        .map(|(t, f)| (draws.iter().filter(|d| **d <= *t).count() as f64 / n - f).abs())
        .fold(0.0, f64::max)
}

#[test]
fn sampler_follows_the_residual_law() {
    let curve = SurvivalCurve::new(vec![1.0, 2.0, 3.5, 5.0, 7.0], vec![0.9, 0.7, 0.4, 0.3, 0.1]).unwrap();
    let t_max = 6.0;
    let c = 1.5;
    let residual = conditional_residual_survival(&curve, c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_event_time(&residual, t_max, &mut rng)).collect();

    // oracle: P(T <= t | T > c) = 1 - S(t)/S(c) below t_max, point mass at t_max
    let s_c = 0.9;
    let points = [2.0, 3.5, 5.0, 6.0];
    let cdf = [1.0 - 0.7 / s_c, 1.0 - 0.4 / s_c, 1.0 - 0.3 / s_c, 1.0];
    assert!(draws.iter().all(|d| *d > c && *d <= t_max));
    assert!(draws.iter().all(|d| points.contains(d)));
    let d = ks_distance(&draws, &points, &cdf);
    assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
}

#[test]
fn residual_identity() {
    let curve = SurvivalCurve::new(vec![1.0, 2.0, 4.0], vec![0.8, 0.5, 0.2]).unwrap();
    let r = conditional_residual_survival(&curve, 1.0).unwrap();
    for t in [1.0, 1.5, 2.0, 3.0, 4.0, 9.0] {
        assert!((r.eval(t) - curve.eval(t) / curve.eval(1.0)).abs() < 1e-15);
    }
    let dead = SurvivalCurve::new(vec![1.0], vec![0.0]).unwrap();
    assert!(matches!(conditional_residual_survival(&dead, 2.0), Err(Error::DegenerateConditioning(_))));
}

#[test]
fn imputed_times_lie_after_censoring_and_within_t_max() {
    let id = SettingId::Standard(6);
    let sample = generate(id, 400, 21).unwrap();
    let ds = &sample.data;
    // horizon at t_max, so the imputed datasets hold the raw draws
    let t_max = simulation::spec(id).t_max;
    let study = StudyConfig::new(t_max, t_max).unwrap();
    let params = RistParams {
        ert: ErtParams { n_trees: 30, k_try: 6, min_events: 3, t_max, seed: 4 },
        q_steps: 1,
        n_imputations: 5,
        study,
    };
    let model = rist_fit(ds, &params).unwrap();
    let imps = impute_datasets(&model, ds, 5, &study, 8).unwrap();
    let mut n_checked = 0;
    for imp in &imps {
        assert!(imp.dataset.event().iter().all(|e| *e));
        for i in 0..ds.n() {
            let (c, got) = (ds.time()[i], imp.dataset.time()[i]);
            if !ds.event()[i] && c < t_max {
                assert!(got > c && got <= t_max, "unit {i}: censored at {c}, imputed {got}");
                n_checked += 1;
            } else {
                assert_eq!(got, c);
            }
        }
    }
    assert!(n_checked > 100);
}
