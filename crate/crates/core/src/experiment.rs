//! Experiment runners: turn a scenario into a CSV table.
//!
//! Output is deterministic byte for byte: floats are rendered with Rust's
//! shortest round-trip formatting, byte counts as plain integers, cells with
//! no defined value as empty strings. Rows appear in input order.

use crate::cluster::StorageCluster;
use crate::markov::{metrics_from_distribution, TruncatedChain};
use crate::queueing::QueueParameters;
use crate::scenario::{CapacityScenario, Engine, SweepScenario};
use crate::sim::{run_simulation, SimulationConfig};
use std::io;

/// A rectangular table of pre-formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: Vec<S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cell by row index and column name. Panics on a bad name, which in
    /// practice only happens in tests.
    pub fn cell(&self, row: usize, column: &str) -> &str {
        let index = self
            .column_index(column)
            .unwrap_or_else(|| panic!("no column {column:?}"));
        &self.rows[row][index]
    }

    fn push_row(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "ragged table row");
        self.rows.push(row);
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()
    }

    pub fn to_csv(&self) -> String {
        let mut buffer = Vec::new();
        self.write_csv(&mut buffer)
            .expect("writing to memory cannot fail");
        String::from_utf8(buffer).expect("csv output is utf-8")
    }
}

/// Shortest round-trip float formatting; NaN becomes an empty cell.
fn cell_f64(value: f64) -> String {
    if value.is_nan() {
        String::new()
    } else {
        format!("{value}")
    }
}

/// Relative deviation of `value` from `reference`, absolute when the
/// reference is zero, empty when either side is undefined.
fn cell_reldev(value: f64, reference: f64) -> String {
    if value.is_nan() || reference.is_nan() {
        return String::new();
    }
    let gap = (value - reference).abs();
    cell_f64(if reference == 0.0 {
        gap
    } else {
        gap / reference.abs()
    })
}

fn empty_cells(n: usize) -> impl Iterator<Item = String> {
    std::iter::repeat_with(String::new).take(n)
}

const BASE_COLUMNS: [&str; 9] = [
    "lambda",
    "mu",
    "rho",
    "T",
    "W",
    "N",
    "N_Q",
    "P0",
    "saturated",
];
const ORACLE_COLUMNS: [&str; 8] = [
    "T_oracle",
    "W_oracle",
    "N_oracle",
    "N_Q_oracle",
    "P0_oracle",
    "T_oracle_reldev",
    "W_oracle_reldev",
    "N_oracle_reldev",
];
const SIM_COLUMNS: [&str; 9] = [
    "T_sim",
    "W_sim",
    "N_sim",
    "rho_sim",
    "T_sim_reldev",
    "W_sim_reldev",
    "N_sim_reldev",
    "little_law_residual",
    "sim_jobs",
];

/// Runs a sweep scenario. Closed-form columns are always present; oracle and
/// sim columns appear when the scenario enables those engines. Saturated rows
/// (only reachable with `allow_saturated`) carry just the load description,
/// with every steady-state cell left empty.
pub fn run_sweep(scenario: &SweepScenario) -> Table {
    let with_oracle = scenario.uses_engine(Engine::Oracle);
    let with_sim = scenario.uses_engine(Engine::Sim);

    let mut header: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    if with_oracle {
        header.extend(ORACLE_COLUMNS.iter().map(|s| s.to_string()));
    }
    if with_sim {
        header.extend(SIM_COLUMNS.iter().map(|s| s.to_string()));
    }
    let mut table = Table::new(header);

    for &lambda in &scenario.arrival_rates {
        let params = QueueParameters::new(lambda, scenario.service_rate)
            .expect("scenario validation checked the rates");
        let mut row = vec![
            cell_f64(lambda),
            cell_f64(scenario.service_rate),
            cell_f64(params.utilization()),
        ];

        let Ok(exact) = params.metrics() else {
            row.extend(empty_cells(5));
            row.push("true".to_string());
            row.extend(empty_cells(table.header().len() - row.len()));
            table.push_row(row);
            continue;
        };
        row.extend([
            cell_f64(exact.mean_response_time),
            cell_f64(exact.mean_wait),
            cell_f64(exact.mean_in_system),
            cell_f64(exact.mean_queue_length),
            cell_f64(exact.prob_empty),
            "false".to_string(),
        ]);

        if with_oracle {
            let chain = TruncatedChain::new(params, scenario.oracle_truncation)
                .expect("scenario validation checked the truncation level");
            let oracle = metrics_from_distribution(&chain.solve_steady_state(), &params);
            row.extend([
                cell_f64(oracle.mean_response_time),
                cell_f64(oracle.mean_wait),
                cell_f64(oracle.mean_in_system),
                cell_f64(oracle.mean_queue_length),
                cell_f64(oracle.prob_empty),
                cell_reldev(oracle.mean_response_time, exact.mean_response_time),
                cell_reldev(oracle.mean_wait, exact.mean_wait),
                cell_reldev(oracle.mean_in_system, exact.mean_in_system),
            ]);
        }

        if with_sim {
            let settings = scenario.sim_settings();
            // A zero arrival rate has nothing to simulate; those cells stay
            // empty while the closed form still describes the idle server.
            match SimulationConfig::new(params, settings.seed, settings.jobs, settings.warmup) {
                Ok(config) => {
                    let report = run_simulation(&config);
                    row.extend([
                        cell_f64(report.observed_response_time),
                        cell_f64(report.observed_wait),
                        cell_f64(report.observed_mean_in_system),
                        cell_f64(report.observed_utilization),
                        cell_reldev(report.observed_response_time, exact.mean_response_time),
                        cell_reldev(report.observed_wait, exact.mean_wait),
                        cell_reldev(report.observed_mean_in_system, exact.mean_in_system),
                        cell_f64(report.little_law_residual()),
                        report.jobs_completed.to_string(),
                    ]);
                }
                Err(_) => row.extend(empty_cells(SIM_COLUMNS.len())),
            }
        }

        table.push_row(row);
    }
    table
}

/// Single-point closed-form analysis: a one-row table in the sweep's base
/// column layout. Saturated parameters produce a flagged row.
pub fn run_analyze(params: &QueueParameters) -> Table {
    let mut table = Table::new(BASE_COLUMNS.to_vec());
    let mut row = vec![
        cell_f64(params.arrival_rate()),
        cell_f64(params.service_rate()),
        cell_f64(params.utilization()),
    ];
    match params.metrics() {
        Ok(m) => row.extend([
            cell_f64(m.mean_response_time),
            cell_f64(m.mean_wait),
            cell_f64(m.mean_in_system),
            cell_f64(m.mean_queue_length),
            cell_f64(m.prob_empty),
        ]),
        Err(_) => row.extend(empty_cells(5)),
    }
    row.push((!params.is_stable()).to_string());
    table.push_row(row);
    table
}

/// How an ingest workload went, alongside the cluster it was applied to.
#[derive(Debug)]
pub struct IngestOutcome {
    pub cluster: StorageCluster,
    pub files_stored: usize,
    pub files_failed: usize,
    pub under_replicated_blocks: usize,
}

fn node_id(index: u64, count: u64) -> String {
    let width = (count.saturating_sub(1).to_string().len()).max(3);
    format!("d{index:0width$}")
}

fn file_id(index: usize, count: usize) -> String {
    let width = (count.saturating_sub(1).to_string().len()).max(3);
    format!("f{index:0width$}")
}

/// Builds the scenario's cluster at one node count and stores the workload.
/// Files that do not fit are skipped and counted, not fatal.
pub fn apply_workload(scenario: &CapacityScenario, node_count: u64) -> IngestOutcome {
    let mut cluster = StorageCluster::new(scenario.cluster)
        .expect("scenario validation checked the cluster config");
    for i in 0..node_count {
        cluster
            .register_node(&node_id(i, node_count), scenario.per_node_raw.as_u64())
            .expect("generated node ids are unique");
    }
    let mut files_stored = 0;
    let mut files_failed = 0;
    for (i, size) in scenario.workload.iter().enumerate() {
        match cluster.store_file(&file_id(i, scenario.workload.len()), size.as_u64()) {
            Ok(_) => files_stored += 1,
            Err(_) => files_failed += 1,
        }
    }
    IngestOutcome {
        under_replicated_blocks: cluster.under_replicated_blocks(),
        files_stored,
        files_failed,
        cluster,
    }
}

/// Runs a capacity scenario: one row per node count, each from a fresh
/// cluster with the workload applied.
pub fn run_capacity(scenario: &CapacityScenario) -> Table {
    let mut table = Table::new(vec![
        "nodes",
        "raw_total",
        "usable_total",
        "used_after_workload",
        "avg_used_per_node",
        "usable_fraction",
        "workload_complete",
    ]);
    for &count in &scenario.node_counts {
        let outcome = apply_workload(scenario, count);
        let report = outcome.cluster.usage_report();
        table.push_row(vec![
            count.to_string(),
            report.total_raw.to_string(),
            report.total_usable.to_string(),
            report.total_used.to_string(),
            cell_f64(report.average_used_per_node),
            cell_f64(report.usable_fraction),
            (outcome.files_failed == 0).to_string(),
        ]);
    }
    table
}

/// Runs the ingest view of a capacity scenario: the workload goes into a
/// cluster at the first configured node count, and the table shows per-node
/// usage afterwards.
pub fn run_ingest(scenario: &CapacityScenario) -> (Table, IngestOutcome) {
    let count = *scenario
        .node_counts
        .first()
        .expect("validation requires a node count");
    let outcome = apply_workload(scenario, count);
    let mut table = Table::new(vec![
        "node_id",
        "raw_capacity",
        "usable_capacity",
        "used",
        "free",
        "replica_count",
    ]);
    for node in outcome.cluster.usage_report().nodes {
        table.push_row(vec![
            node.node_id,
            node.raw_capacity.to_string(),
            node.usable_capacity.to_string(),
            node.used.to_string(),
            node.free.to_string(),
            node.replica_count.to_string(),
        ]);
    }
    (table, outcome)
}
