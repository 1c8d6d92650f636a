use legmhe::fif::{solve_fif, FifProblem};
use legmhe::marginalization::prior_arrival;
use legmhe::pipeline::{group_ticks, EstimatorConfig, InitialState, Pipeline};
use legmhe::sim::{random_linear_instance, simulate, Scenario, SimConfig};
use legmhe::window::{solve_window, Horizon};
use legmhe::qp::QpOptions;
use nalgebra::DVector;

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

#[test]
fn random_chains_match_full_information() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let inst = random_linear_instance(seed, 14, seed % 2 == 0);
        let prior = prior_arrival(&inst.prior_mean, &inst.prior_covariance, inst.state_dim, 0.0).unwrap();
        let mut h = Horizon::new(inst.window, prior.clone(), true);
        for node in &inst.nodes {
            // Links to a node arrive with that node.
            if let Some(prev) = h.nodes_mut().back_mut() {
                let t = prev.time as usize;
                *prev = inst.nodes[t].clone();
            }
            let mut head = node.clone();
            head.constraints.retain(|c| c.next.is_none());
            h.push(head);
            let sol = h.step().unwrap();
            let hist = h.history().unwrap();
            let full = solve_window(&hist, &prior, &QpOptions::default()).unwrap();
            worst = worst.max(rel(sol.states.last().unwrap(), full.states.last().unwrap()));
        }
    }
    assert!(worst <= 1e-8, "worst relative deviation {worst:e}");
}

fn log_deviation(scenario: Scenario, seed: u64, ticks: usize, window: usize) -> f64 {
    let sim = SimConfig { scenario, seed, duration: ticks as f64 / 200.0, ..SimConfig::default() };
    let recs = simulate(&sim);
    let ticks = group_ticks(&recs, scenario.n_feet());
    let mut cfg = EstimatorConfig::default();
    cfg.noise.window_size = window;
    let init = InitialState::from(ticks[0].truth.as_ref().unwrap());
    let mut p = Pipeline::new(cfg, init, true);
    let mut worst: f64 = 0.0;
    for tick in &ticks {
        let est = p.step(tick).unwrap();
        let problem = FifProblem::from_estimator(p.mhe().unwrap()).unwrap();
        let fif = solve_fif(&problem, problem.nodes.len() - 1).unwrap();
        worst = worst.max(rel(&est.state.to_vector(), &fif.to_vector()));
    }
    worst
}

#[test]
fn simulated_logs_match_full_information() {
    for (sc, seed) in [(Scenario::Hopper, 3), (Scenario::Trot, 4)] {
        let d = log_deviation(sc, seed, 300, 20);
        eprintln!("{sc:?} deviation {d:e}");
        assert!(d <= 1e-8, "{sc:?}: {d:e}");
    }
}
