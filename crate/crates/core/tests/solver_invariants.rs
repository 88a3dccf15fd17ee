use dislo_core::harness::compare_ode_pde;
use dislo_core::ode::{integrate, Orientation, ParticleState};
use dislo_core::solver::{run, ExperimentConfig};
use std::f64::consts::PI;

fn crossings_at_end(cfg: &ExperimentConfig) -> Vec<f64> {
    run(cfg).unwrap().crossings.last().unwrap().clone()
}

#[test]
fn doubling_the_height_barely_moves_crossings() {
    let mut cfg = ExperimentConfig::standard(0.2, 1.0, vec![-0.5, 0.5], 0.25, 0.125);
    cfg.store_fields = false;
    cfg.domain.ly = 10.0;
    let short = crossings_at_end(&cfg);
    cfg.domain.ly = 20.0;
    let tall = crossings_at_end(&cfg);
    let hx = 0.2 / 8.0;
    for (a, b) in short.iter().zip(&tall) {
        assert!((a - b).abs() <= hx, "{a} {b}");
    }
}

fn refined_crossings(space: f64, time: f64) -> Vec<f64> {
    let eps = 0.2;
    let mut cfg = ExperimentConfig::standard(eps, 1.0, vec![-0.5, 0.5], 0.1, 0.1);
    cfg.store_fields = false;
    cfg.domain.lx = 10.0;
    cfg.domain.ly = 10.0;
    cfg.grid.h_core = Some(eps / 8.0 * space);
    cfg.grid.ratio = Some(1.0 + 0.08 * space);
    cfg.grid.h_max = Some(space);
    cfg.time.dt = Some(eps * eps / 4.0 * time);
    crossings_at_end(&cfg)
}

fn successive_deltas(runs: &[Vec<f64>]) -> Vec<f64> {
    runs.windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect()
}

#[test]
fn time_refinement_is_first_order() {
    let runs: Vec<Vec<f64>> = [1.0, 0.5, 0.25].iter().map(|&f| refined_crossings(1.0, f)).collect();
    let d = successive_deltas(&runs);
    assert!(d[1] <= d[0] / 2.0 * 1.05, "{d:?}");
}

#[test]
fn space_refinement_is_at_least_first_order() {
    let runs: Vec<Vec<f64>> = [1.0, 0.5, 0.25].iter().map(|&f| refined_crossings(f, 1.0)).collect();
    let d = successive_deltas(&runs);
    assert!(d[1] <= d[0] / 2.0, "{d:?}");
}

#[test]
fn single_layer_stays_put() {
    let mut cfg = ExperimentConfig::standard(0.2, 1.0, vec![0.0], 0.25, 0.125);
    cfg.store_fields = false;
    let rec = run(&cfg).unwrap();
    let traj = integrate(&ParticleState::new(vec![0.0]).unwrap(), 2.0 * PI, 0.0, Orientation::None, 0.25, 1e-10).unwrap();
    let (rows, _) = compare_ode_pde(&rec, &traj, 5.0).unwrap();
    let hx = 0.2 / 8.0;
    assert!(rows[0].max_crossing_error() <= hx);
    for r in &rows {
        assert!(r.max_crossing_error() <= 2.0 * hx, "{r:?}");
    }
}
