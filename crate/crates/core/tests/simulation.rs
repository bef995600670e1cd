use mistr_core::simulation::*;

#[test]
fn observed_data_reconstructs_from_latent_times() {
    for id in SettingId::STANDARD.iter().chain(SettingId::IV.iter()) {
        let literal = GeneratorOptions { end_of_follow_up: false, ..Default::default() };
        let s = generate_with(*id, 300, 5, &literal).unwrap();
        for i in 0..300 {
            let (tt, c) = (s.event_time[i], s.censor_time[i]);
            assert_eq!(s.data.time()[i], tt.min(c), "design {id} unit {i}");
            assert_eq!(s.data.event()[i], tt <= c);
        }

        let s = generate(*id, 300, 5).unwrap();
        let tau = s.follow_up;
        assert_eq!(tau, spec(*id).t_max);
        for i in 0..300 {
            let (tt, c) = (s.event_time[i], s.censor_time[i]);
            assert_eq!(s.data.time()[i], tt.min(c).min(tau));
            assert_eq!(s.data.event()[i], tt <= c && tt < tau);
        }
    }
}

#[test]
fn no_censoring_observes_every_event() {
    let opts = GeneratorOptions { censoring: false, ..Default::default() };
    let s = generate_with(SettingId::Standard(8), 500, 2, &opts).unwrap();
    assert!(s.data.event().iter().all(|e| *e));
    assert_eq!(s.data.time(), &s.event_time[..]);
}

#[test]
fn censoring_rates_match_reference_table() {
    for (k, reference) in [(3u8, 11.3), (4, 21.0), (6, 76.2), (8, 92.7)] {
        let id = SettingId::Standard(k);
        let mean = (0..5).map(|s| generate(id, 5000, s).unwrap().censoring_rate()).sum::<f64>() / 5.0;
        assert!((100.0 * mean - reference).abs() <= 2.0, "design {k}: {:.1}% vs {reference}%", 100.0 * mean);
    }
}

#[test]
fn generation_is_deterministic() {
    let a = generate(SettingId::Iv(IvVariant::T204a), 200, 9).unwrap();
    let b = generate(SettingId::Iv(IvVariant::T204a), 200, 9).unwrap();
    assert_eq!(a, b);
    let c = generate(SettingId::Iv(IvVariant::T204a), 200, 10).unwrap();
    assert_ne!(a.data, c.data);
    assert!(a.data.instrument().is_some());
}

/// `E[min(T, h)] = sum_{k < h} P(T > k)` for Poisson `T` and integer `h`.
fn poisson_rmst(lambda: f64, h: u32) -> f64 {
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut total = 0.0;
    for k in 0..h {
        total += 1.0 - cdf;
        p *= lambda / (k + 1) as f64;
        cdf += p;
    }
    total
}

/// `int_0^h S(t) dt` by composite Simpson.
fn integrate_survival(s: impl Fn(f64) -> f64, h: f64) -> f64 {
    let n = 20_000;
    let dx = h / n as f64;
    let mut acc = s(0.0) + s(h);
    for i in 1..n {
        acc += s(i as f64 * dx) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * dx / 3.0
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[test]
fn monte_carlo_truth_matches_closed_forms() {
    let n_mc = 200_000;
    // design 4: Poisson(x2 + x3 + (x1 - 0.3)+ W), h = 3
    let id = SettingId::Standard(4);
    let g = spec(id).outcome();
    for x in [[0.1, 0.5, 0.5, 0.2, 0.9], [0.9, 0.3, 0.8, 0.5, 0.5]] {
        let l0 = x[1] + x[2];
        let l1 = l0 + (x[0] - 0.3f64).max(0.0);
        let exact = poisson_rmst(l1, 3) - poisson_rmst(l0, 3);
        let mc = true_cate(id, &x, n_mc, 1, &g).unwrap();
        assert!((mc - exact).abs() < 0.01, "design 4 at {x:?}: {mc} vs {exact}");
        if x[0] <= 0.3 {
            assert_eq!(mc, 0.0);
        }
    }

    // design 1: log-normal AFT with unit noise scale, h = 0.7
    let id = SettingId::Standard(1);
    let g = spec(id).outcome();
    let x: [f64; 5] = [0.3, 0.6, 0.4, 0.5, 0.5];
    let lo = if x[0] < 0.5 { 1.0 } else { 0.0 };
    let mu0 = -1.85 - 0.8 * lo + 0.7 * x[1].sqrt() + 0.2 * x[2];
    let mu1 = mu0 + 0.7 - 0.4 * lo - 0.4 * x[1].sqrt();
    let rmst = |mu: f64| integrate_survival(|t| if t <= 0.0 { 1.0 } else { 1.0 - normal_cdf(t.ln() - mu) }, 0.7);
    let exact = rmst(mu1) - rmst(mu0);
    let mc = true_cate(id, &x, n_mc, 2, &g).unwrap();
    assert!((mc - exact).abs() < 0.002, "design 1: {mc} vs {exact}");

    // design 2: Cox with S(t) = exp(-exp(eta) t^0.5), h = 0.7
    let id = SettingId::Standard(2);
    let g = spec(id).outcome();
    let eta0 = x[0];
    let eta1 = x[0] - 0.5 + x[1];
    let rmst = |eta: f64| integrate_survival(|t| (-(eta as f64).exp() * t.sqrt()).exp(), 0.7);
    let exact = rmst(eta1) - rmst(eta0);
    let mc = true_cate(id, &x, n_mc, 3, &g).unwrap();
    assert!((mc - exact).abs() < 0.002, "design 2: {mc} vs {exact}");
}

#[test]
fn mimic_truth_matches_monte_carlo() {
    let b = [1.0, 0.0, 1.0, 0.0, 0.0];
    let age = 0.4;
    let exact = mimic_true_cate(&b, age, 28);
    let (l1, l0) = (mimic_lambda_f(&b, age, true), mimic_lambda_f(&b, age, false));
    assert!((exact - (poisson_rmst(l1, 28) - poisson_rmst(l0, 28))).abs() < 1e-12);
    assert!(exact < 0.0);
}

#[test]
fn quantile_grid_has_21_rows() {
    let q = quantiles_test_set(SettingId::Standard(3)).unwrap();
    assert_eq!((q.n_rows(), q.n_cols()), (21, 5));
    assert_eq!(q.row(2), &[0.1; 5]);
    assert_eq!(quantiles_test_set(SettingId::Standard(7)).unwrap().n_cols(), 7);
    assert!(quantiles_test_set(SettingId::Iv(IvVariant::T200)).is_err());
}
