use mistr_core::curve::kaplan_meier;
use mistr_core::*;
use proptest::prelude::*;

fn survival_data() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            proptest::collection::vec((1u32..40).prop_map(|k| k as f64 * 0.25), n),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

fn dataset(time: Vec<f64>, event: Vec<bool>, driver_seed: u64) -> SurvivalDataset {
    let n = time.len();
    let x: Vec<f64> = (0..n).flat_map(|i| [((i as u64 ^ driver_seed) & 1) as f64, i as f64 / n as f64]).collect();
    let w = (0..n).map(|i| i % 2 == 0).collect();
    SurvivalDataset::new(Matrix::new(n, 2, x).unwrap(), w, None, time, event).unwrap()
}

proptest! {
    #[test]
    fn kaplan_meier_is_a_nonincreasing_step_function((time, event) in survival_data()) {
        let km = kaplan_meier(&time, &event);
        let v = km.values();
        prop_assert!(v.iter().all(|s| (0.0..=1.0).contains(s)));
        prop_assert!(v.windows(2).all(|p| p[1] <= p[0]));
        prop_assert!(km.grid().windows(2).all(|p| p[0] < p[1]));
        prop_assert_eq!(km.eval(0.0), 1.0);
        let mut t = 0.0;
        let mut last = 1.0;
        while t < 12.0 {
            let s = km.eval(t);
            prop_assert!(s <= last);
            last = s;
            t += 0.1;
        }
    }

    #[test]
    fn residual_curve_starts_at_one_and_decreases((time, event) in survival_data(), c in 0.0f64..10.0) {
        let km = kaplan_meier(&time, &event);
        if let Ok(r) = conditional_residual_survival(&km, c) {
            prop_assert!((r.eval(c) - 1.0).abs() < 1e-12);
            prop_assert!(r.values().windows(2).all(|p| p[1] <= p[0]));
        } else {
            prop_assert_eq!(km.eval(c), 0.0);
        }
    }

    #[test]
    fn transform_is_bounded_and_monotone(h in 0.1f64..10.0, a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for kind in [OutcomeKind::Rmst, OutcomeKind::SurvivalIndicator] {
            let g = OutcomeTransform::new(kind, h).unwrap();
            prop_assert!(g.apply(lo) <= g.apply(hi));
            prop_assert_eq!(g.apply(h + a), g.apply(h));
        }
        prop_assert!(OutcomeTransform::rmst(h).unwrap().apply(hi) <= h);
    }

    #[test]
    fn effective_noncensoring_covers_events_and_horizon(t in 0.0f64..20.0, event: bool, h in 0.1f64..20.0) {
        let d = effective_noncensoring(t, event, h);
        prop_assert_eq!(d, event || t >= h);
        if event {
            prop_assert!(d);
        }
    }

    #[test]
    fn extra_censoring_never_extends_follow_up(
        (time, event) in survival_data(),
        seed: u64,
        p0 in 0.0f64..0.5,
        p1 in 0.0f64..0.5,
        fraction in 0.05f64..1.0,
    ) {
        let ds = dataset(time, event, seed);
        let cfg = ExtraCensoring::new(0, p0, p1, fraction);
        let out = apply_extra_censoring(&ds, &cfg, seed).unwrap();
        for i in 0..ds.n() {
            prop_assert!(out.time()[i] <= ds.time()[i]);
            prop_assert!(out.time()[i] >= 0.0);
            prop_assert!(!(out.event()[i] && !ds.event()[i]));
            if out.event()[i] {
                prop_assert_eq!(out.time()[i], ds.time()[i]);
            }
        }
        prop_assert_eq!(&out, &apply_extra_censoring(&ds, &cfg, seed).unwrap());
    }
}
