//! Cross-engine checks: the three engines must tell one consistent story,
//! and the table layer must be byte-deterministic.

use std::path::{Path, PathBuf};
use storq::experiment::{run_capacity, run_sweep};
use storq::queueing::QueueParameters;
use storq::scenario::{load_scenario, Engine, Scenario, SimSettings, SweepScenario};
use storq::sim::{run_simulation, SimulationConfig};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn sweep_with_sim() -> SweepScenario {
    let mut sweep = match load_scenario(&scenario_path("sweep.json")).unwrap() {
        Scenario::Sweep(s) => s,
        _ => panic!("expected a sweep"),
    };
    sweep.engines = vec![Engine::ClosedForm, Engine::Oracle, Engine::Sim];
    sweep
}

#[test]
fn single_seed_simulation_tracks_closed_forms() {
    let sweep = sweep_with_sim();
    let table = run_sweep(&sweep);

    for row in 0..table.rows().len() {
        let lambda: f64 = table.cell(row, "lambda").parse().unwrap();
        let mu: f64 = table.cell(row, "mu").parse().unwrap();
        let rho = lambda / mu;
        let tol = if rho >= 0.9 { 0.05 } else { 0.03 };
        for metric in ["T", "W", "N"] {
            let reldev: f64 = table
                .cell(row, &format!("{metric}_sim_reldev"))
                .parse()
                .unwrap();
            assert!(
                reldev <= tol,
                "row {row} ({metric}): single-seed deviation {reldev} above {tol}"
            );
        }
        let residual: f64 = table.cell(row, "little_law_residual").parse().unwrap();
        assert!(residual < 0.02, "row {row}: residual {residual}");
    }
}

#[test]
fn oracle_columns_match_closed_forms_in_the_table() {
    let sweep = sweep_with_sim();
    let table = run_sweep(&sweep);
    for row in 0..table.rows().len() {
        let lambda: f64 = table.cell(row, "lambda").parse().unwrap();
        for metric in ["T", "W", "N"] {
            let reldev: f64 = table
                .cell(row, &format!("{metric}_oracle_reldev"))
                .parse()
                .unwrap();
            let tol = if lambda == 30.0 { 1e-6 } else { 1e-8 };
            assert!(reldev <= tol, "row {row} {metric}: oracle reldev {reldev}");
        }
    }
}

#[test]
fn sweep_csv_is_byte_deterministic() {
    let mut sweep = sweep_with_sim();
    sweep.sim = Some(SimSettings {
        seed: 9,
        jobs: 50_000,
        warmup: 5_000,
    });
    let first = run_sweep(&sweep).to_csv();
    let second = run_sweep(&sweep).to_csv();
    assert_eq!(first, second);
    assert!(first.starts_with("lambda,mu,rho,T,W,N,N_Q,P0,saturated"));
}

#[test]
fn capacity_csv_is_byte_deterministic() {
    let scenario = match load_scenario(&scenario_path("capacity.json")).unwrap() {
        Scenario::Capacity(c) => c,
        _ => panic!("expected capacity"),
    };
    let first = run_capacity(&scenario).to_csv();
    let second = run_capacity(&scenario).to_csv();
    assert_eq!(first, second);
    assert!(first.starts_with(
        "nodes,raw_total,usable_total,used_after_workload,avg_used_per_node,usable_fraction"
    ));
}

#[test]
fn departure_states_follow_the_geometric_law() {
    let params = QueueParameters::new(16.0, 32.0).unwrap();
    let config = SimulationConfig::new(params, 11, 1_000_000, 100_000).unwrap();
    let report = run_simulation(&config);

    let total: u64 = report.departure_state_counts.iter().sum();
    assert_eq!(total, 900_000);
    let rho = 0.5f64;
    for state in 0..=10usize {
        let observed = report
            .departure_state_counts
            .get(state)
            .copied()
            .unwrap_or(0) as f64
            / total as f64;
        let expected = (1.0 - rho) * rho.powi(state as i32);
        assert!(
            (observed - expected).abs() < 0.01,
            "state {state}: observed {observed}, geometric {expected}"
        );
    }
}
