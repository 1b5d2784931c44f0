//! Shows simulated metrics converging on the closed forms across the load
//! grid. Pass seeds as arguments to try other replications:
//!
//! ```text
//! cargo run --release --example convergence -- 1 2 3 4 5
//! ```

use storq::queueing::QueueParameters;
use storq::sim::{run_simulation, SimulationConfig};

fn main() {
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("seeds must be integers"))
        .collect();
    let seeds = if seeds.is_empty() {
        vec![1, 2, 3, 4, 5]
    } else {
        seeds
    };

    println!("lambda     T exact    T simulated  deviation");
    for &lambda in &[5.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
        let params = QueueParameters::new(lambda, 32.0).unwrap();
        let exact = params.metrics().unwrap();
        let mut sum_t = 0.0f64;
        for &seed in &seeds {
            let config = SimulationConfig::new(params, seed, 1_000_000, 100_000).unwrap();
            sum_t += run_simulation(&config).observed_response_time;
        }
        let avg_t = sum_t / seeds.len() as f64;
        println!(
            "{lambda:6.1} {:10.6} {:12.6}   {:+.3}%",
            exact.mean_response_time,
            avg_t,
            100.0 * (avg_t - exact.mean_response_time) / exact.mean_response_time
        );
    }
}
