use armagm::bench::{levelset_sweep, metric_err, monte_carlo, summarize, LevelObjective, MonteCarloConfig, SweepRange};
use armagm::freqgrid::{cone_membership_scalar, eval_scalar};
use armagm::gml::{problem_data, GmlConfig, Method};
use armagm::synth::{random_model, simulate, ModelRecipe};
use armagm::{FrequencyGrid, GammaWeights, ScalarTrigPoly};

fn small(trials: usize) -> MonteCarloConfig {
    MonteCarloConfig {
        recipe: ModelRecipe { m: 3, n: 2, edge_density: 0.34, ..Default::default() },
        n_obs: 300,
        trials,
        record_runtime: false,
        gml: GmlConfig { grid_points: 256, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn exact_moments_single_trial_recovers_graph() {
    let cfg = MonteCarloConfig { exact_moments: true, estimators: vec![Method::Gml, Method::Me], ..small(1) };
    let rows = monte_carlo(&cfg, 5, Some(1), |_| {}).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].estimator, Method::Gml);
    assert_eq!(rows[0].e_sp, Some(0.0));
    assert!(rows[0].converged);
    assert_eq!(rows[1].estimator, Method::Me);
    assert!(rows[1].err.is_some_and(|e| e > 0.0 && e < 1.0), "{rows:?}");
}

#[test]
fn failures_become_flagged_rows() {
    // two samples cannot carry lag-2 covariances
    let cfg = MonteCarloConfig { n_obs: 2, ..small(2) };
    let rows = monte_carlo(&cfg, 1, None, |_| {}).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.failed() && !r.converged && r.e_sp.is_none()));
    let s = summarize(&rows, &cfg.estimators, 1);
    assert_eq!(s.failures.len(), 6);
    assert!(s.estimators.iter().all(|e| e.failures == 2 && e.err.is_none()));
}

#[test]
fn rows_do_not_depend_on_thread_count() {
    let cfg = small(4);
    let seen = std::sync::atomic::AtomicUsize::new(0);
    let a = monte_carlo(&cfg, 11, Some(1), |rows| {
        seen.fetch_add(rows.len(), std::sync::atomic::Ordering::Relaxed);
    })
    .unwrap();
    let b = monte_carlo(&cfg, 11, Some(3), |_| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(seen.into_inner(), 12);
    let trials: Vec<usize> = a.iter().map(|r| r.trial).collect();
    assert_eq!(trials, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
    let c = monte_carlo(&cfg, 12, Some(3), |_| {}).unwrap();
    assert_ne!(a, c);
}

#[test]
fn err_stable_under_grid_refinement_for_smooth_spectra() {
    let recipe = ModelRecipe { m: 4, n: 2, zero_modulus: [0.5, 0.6], seed: 2, ..Default::default() };
    let truth = random_model(&recipe).unwrap();
    let other = random_model(&ModelRecipe { seed: 3, ..recipe }).unwrap();
    let err = |k: usize| {
        let g = FrequencyGrid::new(k).unwrap();
        metric_err(&other.inverse_spectrum(&g).unwrap(), &truth.inverse_spectrum(&g).unwrap()).unwrap()
    };
    let (coarse, fine) = (err(512), err(2048));
    assert!(coarse > 0.1);
    assert!((coarse - fine).abs() <= 1e-3, "{coarse} vs {fine}");
}

#[test]
fn sweep_marks_exactly_the_cells_outside_the_cone() {
    let model = random_model(&ModelRecipe { m: 3, n: 2, seed: 4, ..Default::default() }).unwrap();
    let y = simulate(&model, 300, 0, 4).unwrap();
    let cfg = GmlConfig { grid_points: 256, ..Default::default() };
    let data = problem_data(&cfg.moments(&y).unwrap(), &cfg).unwrap();
    let gamma = GammaWeights::constant(3, 10.0);
    let range = SweepRange { resolution: 25, ..Default::default() };
    let sweeps: Vec<_> = [LevelObjective::Tilde, LevelObjective::Check]
        .into_iter()
        .map(|o| levelset_sweep(&data, &model.q, &gamma, 1.0, o, 1e-4, &range).unwrap())
        .collect();
    let fine = FrequencyGrid::new(4096).unwrap();
    let mut outside = 0;
    for (r, &b) in sweeps[0].p2.iter().enumerate() {
        for (c, &a) in sweeps[0].p1.iter().enumerate() {
            let p = ScalarTrigPoly::monic(vec![a, b]);
            let inside = eval_scalar(&p, &data.grid).iter().all(|&v| v > 0.0);
            for s in &sweeps {
                assert_eq!(s.values[r][c].is_some(), inside, "({a}, {b})");
            }
            // away from the boundary the quadrature grid and a fine grid agree
            if cone_membership_scalar(&p, &fine).margin.abs() > 1e-2 {
                assert_eq!(cone_membership_scalar(&p, &fine).inside, inside);
            }
            outside += usize::from(!inside);
        }
    }
    assert!(outside > 0 && outside < 25 * 25);
    assert_eq!(sweeps[0].local_minima().len(), 1);
}

#[test]
fn sweep_needs_degree_two_and_positive_weights() {
    let model = random_model(&ModelRecipe { m: 2, n: 2, seed: 1, ..Default::default() }).unwrap();
    let y = simulate(&model, 200, 0, 1).unwrap();
    let cfg = GmlConfig { grid_points: 128, ..Default::default() };
    let data = problem_data(&cfg.moments(&y).unwrap(), &cfg).unwrap();
    let range = SweepRange::default();
    let zero = GammaWeights::zeros(2);
    assert!(levelset_sweep(&data, &model.q, &zero, 1.0, LevelObjective::Check, 1e-4, &range).is_err());
    let ar = GmlConfig { n_p: 1, ..cfg };
    let data = problem_data(&ar.moments(&y).unwrap(), &ar).unwrap();
    let g = GammaWeights::constant(2, 1.0);
    assert!(levelset_sweep(&data, &model.q, &g, 1.0, LevelObjective::Check, 1e-4, &range).is_err());
}
