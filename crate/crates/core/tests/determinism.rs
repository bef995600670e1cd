//! Fitted models must not depend on the worker-thread count.

use mistr_core::simulation::{generate, spec, SettingId};
use mistr_core::*;

fn config(p: usize, t_max: f64, h: f64) -> MistrConfig {
    let study = StudyConfig::new(t_max, h).unwrap();
    MistrConfig {
        rist: RistParams {
            ert: ErtParams { n_trees: 20, k_try: p + 1, min_events: 3, t_max, seed: 0 },
            q_steps: 2,
            n_imputations: 4,
            study,
        },
        forest: ForestParams { n_trees: 40, ell: 4, ..Default::default() },
        g: OutcomeTransform::rmst(h).unwrap(),
        mode: EstimationMode::Unconfounded,
        seeding: ForestSeeding::Shared,
        seed: 17,
    }
}

fn run() -> (Vec<u64>, Vec<u64>) {
    let id = SettingId::Standard(6);
    let s = spec(id);
    let sample = generate(id, 300, 3).unwrap();
    let ds = &sample.data;
    let queries = simulation::quantiles_test_set(id).unwrap();

    let cfg = config(ds.p(), s.t_max, s.horizon);
    let fit = mistr_fit_predict(ds, &cfg, &queries).unwrap();
    let mut mistr = Vec::new();
    for e in &fit.estimates {
        let e = e.as_ref().unwrap();
        mistr.push(e.tau.to_bits());
        mistr.push(e.total_var.unwrap().to_bits());
    }

    let params = IpcwParams {
        kind: CensoringKind::SurvivalForestConditional,
        censoring: ErtParams { n_trees: 20, k_try: ds.p() + 1, min_events: 15, t_max: s.t_max, seed: 2 },
        clamp: 20.0,
        forest: ForestParams { n_trees: 40, ell: 4, seed: 3, ..Default::default() },
        instrumental: false,
    };
    let ipcw = ipcw_estimate(ds, &cfg.g, &params).unwrap();
    let ipcw = (0..queries.n_rows())
        .flat_map(|i| {
            let e = ipcw.predict(queries.row(i)).unwrap();
            [e.tau.to_bits(), e.variance.map_or(0, f64::to_bits)]
        })
        .collect();
    (mistr, ipcw)
}

#[test]
fn results_are_identical_across_thread_counts() {
    let runs: Vec<_> = [1, 2, 4]
        .iter()
        .map(|&t| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(run))
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}
