use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use storq::experiment::{run_analyze, run_capacity, run_ingest, run_sweep, Table};
use storq::queueing::QueueParameters;
use storq::scenario::{load_scenario, Engine, Scenario, ScenarioError, SimSettings};

/// Queueing and capacity experiments for a replicated block-storage cluster.
///
/// Tables go to stdout as CSV unless --out names a file. Exit codes: 0 on
/// success, 2 for invalid input, 3 for I/O failures.
#[derive(Parser)]
#[command(name = "storq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form steady-state metrics for one (lambda, mu) point.
    Analyze {
        /// Arrival rate lambda, jobs per unit time.
        #[arg(long)]
        arrival_rate: f64,
        /// Service rate mu, jobs per unit time.
        #[arg(long)]
        service_rate: f64,
        /// Emit a flagged row instead of failing when lambda >= mu.
        #[arg(long)]
        allow_saturated: bool,
        /// Output file, or - for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Run a sweep scenario: one row per arrival rate.
    Sweep {
        /// Path to a sweep scenario JSON file.
        scenario: PathBuf,
        /// Comma-separated engines to run, overriding the scenario
        /// (closed_form, oracle, sim).
        #[arg(long, value_delimiter = ',')]
        engine: Vec<String>,
        /// Simulation seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Simulation total jobs override.
        #[arg(long)]
        jobs: Option<u64>,
        /// Simulation warmup jobs override.
        #[arg(long)]
        warmup: Option<u64>,
        /// Output file, or - for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Cluster sizing table: one row per node count.
    Capacity {
        /// Path to a capacity scenario JSON file.
        scenario: PathBuf,
        /// Output file, or - for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Per-node usage after ingesting the scenario workload.
    Ingest {
        /// Path to a capacity scenario JSON file.
        scenario: PathBuf,
        /// Output file, or - for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Full cluster state as JSON after ingesting the scenario workload.
    ExportState {
        /// Path to a capacity scenario JSON file.
        scenario: PathBuf,
        /// Output file, or - for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
}

enum CliError {
    /// Bad arguments or scenario contents; exit 2.
    Usage(String),
    /// Scenario loading, carrying its own exit code.
    Scenario(ScenarioError),
    /// Output writing; exit 3.
    Write {
        path: String,
        source: std::io::Error,
    },
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Scenario(e) => e.exit_code(),
            CliError::Write { .. } => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Scenario(e) => e.to_string(),
            CliError::Write { path, source } => format!("cannot write {path}: {source}"),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze {
            arrival_rate,
            service_rate,
            allow_saturated,
            out,
        } => {
            let params = QueueParameters::new(arrival_rate, service_rate)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if !params.is_stable() && !allow_saturated {
                return Err(CliError::Usage(format!(
                    "saturated queue: arrival rate {arrival_rate} is not below service rate \
                     {service_rate}; pass --allow-saturated to emit a flagged row"
                )));
            }
            write_output(&out, &run_analyze(&params).to_csv())
        }
        Command::Sweep {
            scenario,
            engine,
            seed,
            jobs,
            warmup,
            out,
        } => {
            let Scenario::Sweep(mut sweep) = load_scenario(&scenario)? else {
                return Err(CliError::Usage(format!(
                    "{}: not a sweep scenario",
                    scenario.display()
                )));
            };
            if !engine.is_empty() {
                sweep.engines = engine
                    .iter()
                    .map(|name| name.parse::<Engine>())
                    .collect::<Result<_, _>>()
                    .map_err(CliError::Usage)?;
            }
            if seed.is_some() || jobs.is_some() || warmup.is_some() {
                let base = sweep.sim_settings();
                sweep.sim = Some(SimSettings {
                    seed: seed.unwrap_or(base.seed),
                    jobs: jobs.unwrap_or(base.jobs),
                    warmup: warmup.unwrap_or(base.warmup),
                });
            }
            sweep.validate(&scenario.display().to_string())?;
            write_output(&out, &run_sweep(&sweep).to_csv())
        }
        Command::Capacity { scenario, out } => {
            let capacity = load_capacity(&scenario)?;
            write_output(&out, &run_capacity(&capacity).to_csv())
        }
        Command::Ingest { scenario, out } => {
            let capacity = load_capacity(&scenario)?;
            let (table, outcome): (Table, _) = run_ingest(&capacity);
            if outcome.files_failed > 0 {
                eprintln!(
                    "warning: {} of {} workload files did not fit",
                    outcome.files_failed,
                    outcome.files_failed + outcome.files_stored
                );
            }
            if outcome.under_replicated_blocks > 0 {
                eprintln!(
                    "warning: {} blocks are under-replicated",
                    outcome.under_replicated_blocks
                );
            }
            write_output(&out, &table.to_csv())
        }
        Command::ExportState { scenario, out } => {
            let capacity = load_capacity(&scenario)?;
            let count = capacity.node_counts[0];
            let outcome = storq::experiment::apply_workload(&capacity, count);
            write_output(&out, &outcome.cluster.export_state())
        }
    }
}

fn load_capacity(path: &std::path::Path) -> Result<storq::scenario::CapacityScenario, CliError> {
    match load_scenario(path)? {
        Scenario::Capacity(c) => Ok(c),
        _ => Err(CliError::Usage(format!(
            "{}: not a capacity scenario",
            path.display()
        ))),
    }
}

fn write_output(out: &str, content: &str) -> Result<(), CliError> {
    if out == "-" {
        std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|source| CliError::Write {
                path: "stdout".into(),
                source,
            })
    } else {
        std::fs::write(out, content).map_err(|source| CliError::Write {
            path: out.to_string(),
            source,
        })
    }
}
