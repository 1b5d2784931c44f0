//! Python bindings for the storq toolkit.
//!
//! Two classes carry most of the surface: [`Queue`] wraps the analytical
//! M/M/1 layer together with its oracle and simulator, and [`Cluster`] wraps
//! the replicated block store. Metrics and reports cross the boundary as
//! plain dicts so callers can feed them straight into pandas or json.

use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use storq::cluster::{ByteSize, ClusterConfig, ClusterError, OsOverhead, StorageCluster};
use storq::experiment::{run_capacity, run_ingest, run_sweep};
use storq::markov::{metrics_from_distribution, TruncatedChain};
use storq::queueing::{QueueParameters, SteadyStateMetrics};
use storq::scenario::{load_scenario, Scenario, ScenarioError};
use storq::sim::{run_simulation, SimulationConfig};

/// A byte count given either as an integer or as a unit string like
/// "80 GB" or "64 MiB".
#[derive(FromPyObject)]
enum SizeArg {
    Bytes(u64),
    Text(String),
}

impl SizeArg {
    fn into_bytes(self) -> PyResult<u64> {
        match self {
            SizeArg::Bytes(n) => Ok(n),
            SizeArg::Text(t) => t
                .parse::<ByteSize>()
                .map(ByteSize::as_u64)
                .map_err(PyValueError::new_err),
        }
    }
}

fn cluster_err(e: ClusterError) -> PyErr {
    match e {
        ClusterError::UnknownFile(_) => PyKeyError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn scenario_err(e: ScenarioError) -> PyErr {
    match e {
        ScenarioError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &SteadyStateMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("utilization", m.utilization)?;
    d.set_item("mean_in_system", m.mean_in_system)?;
    d.set_item("mean_response_time", m.mean_response_time)?;
    d.set_item("mean_wait", m.mean_wait)?;
    d.set_item("mean_queue_length", m.mean_queue_length)?;
    d.set_item("prob_empty", m.prob_empty)?;
    Ok(d)
}

/// An M/M/1 queue with fixed arrival and service rates.
#[pyclass(frozen)]
struct Queue {
    params: QueueParameters,
}

#[pymethods]
impl Queue {
    #[new]
    fn new(arrival_rate: f64, service_rate: f64) -> PyResult<Self> {
        let params = QueueParameters::new(arrival_rate, service_rate)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Queue { params })
    }

    #[getter]
    fn arrival_rate(&self) -> f64 {
        self.params.arrival_rate()
    }

    #[getter]
    fn service_rate(&self) -> f64 {
        self.params.service_rate()
    }

    #[getter]
    fn utilization(&self) -> f64 {
        self.params.utilization()
    }

    #[getter]
    fn is_stable(&self) -> bool {
        self.params.is_stable()
    }

    /// Closed-form steady-state metrics as a dict. Raises ValueError when
    /// the queue is saturated.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = self
            .params
            .metrics()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        metrics_dict(py, &m)
    }

    /// Probability of finding exactly `state` jobs in the system.
    fn state_probability(&self, state: usize) -> PyResult<f64> {
        self.params
            .state_probability(state)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// The first `states` steady-state probabilities.
    fn state_distribution(&self, states: usize) -> PyResult<Vec<f64>> {
        self.params
            .state_distribution(states)
            .map(|d| d.probabilities().to_vec())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Metrics from the truncated birth-death chain instead of the closed
    /// forms. Works on saturated queues too.
    #[pyo3(signature = (truncation=400))]
    fn oracle_metrics<'py>(
        &self,
        py: Python<'py>,
        truncation: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let chain = TruncatedChain::new(self.params, truncation)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let vector = chain.solve_steady_state();
        let m = metrics_from_distribution(&vector, &self.params);
        let d = metrics_dict(py, &m)?;
        d.set_item("saturated", vector.is_saturated())?;
        Ok(d)
    }

    /// Steady-state probabilities from the truncated chain.
    #[pyo3(signature = (truncation=400))]
    fn oracle_distribution(&self, truncation: usize) -> PyResult<Vec<f64>> {
        let chain = TruncatedChain::new(self.params, truncation)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(chain.solve_steady_state().probabilities().to_vec())
    }

    /// Runs the discrete-event simulation and returns its report as a dict.
    /// Identical arguments always give identical results.
    #[pyo3(signature = (seed=42, jobs=1_000_000, warmup=100_000))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        seed: u64,
        jobs: u64,
        warmup: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let config = SimulationConfig::new(self.params, seed, jobs, warmup)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let report = run_simulation(&config);
        let d = PyDict::new(py);
        d.set_item("observed_response_time", report.observed_response_time)?;
        d.set_item("observed_wait", report.observed_wait)?;
        d.set_item("observed_utilization", report.observed_utilization)?;
        d.set_item("observed_mean_in_system", report.observed_mean_in_system)?;
        d.set_item("jobs_completed", report.jobs_completed)?;
        d.set_item("elapsed_sim_time", report.elapsed_sim_time)?;
        d.set_item("saturated", report.saturated)?;
        d.set_item("little_law_residual", report.little_law_residual())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Queue(arrival_rate={}, service_rate={})",
            self.params.arrival_rate(),
            self.params.service_rate()
        )
    }
}

/// A replicated block-storage cluster with exact byte accounting.
#[pyclass]
struct Cluster {
    inner: StorageCluster,
}

#[pymethods]
impl Cluster {
    /// Builds an empty cluster. `block_size` and `os_overhead` accept byte
    /// counts or unit strings; `os_overhead_fraction` reserves a fraction
    /// of each node's raw capacity instead of a flat amount.
    #[new]
    #[pyo3(signature = (block_size=None, replication_factor=None, os_overhead=None, os_overhead_fraction=None))]
    fn new(
        block_size: Option<SizeArg>,
        replication_factor: Option<u32>,
        os_overhead: Option<SizeArg>,
        os_overhead_fraction: Option<f64>,
    ) -> PyResult<Self> {
        let mut config = ClusterConfig::default();
        if let Some(size) = block_size {
            config.block_size = ByteSize(size.into_bytes()?);
        }
        if let Some(factor) = replication_factor {
            config.replication_factor = factor;
        }
        match (os_overhead, os_overhead_fraction) {
            (Some(_), Some(_)) => {
                return Err(PyValueError::new_err(
                    "pass os_overhead or os_overhead_fraction, not both",
                ));
            }
            (Some(size), None) => {
                config.os_overhead = OsOverhead::Absolute(ByteSize(size.into_bytes()?));
            }
            (None, Some(fraction)) => {
                config.os_overhead = OsOverhead::Fraction(fraction);
            }
            (None, None) => {}
        }
        let inner = StorageCluster::new(config).map_err(cluster_err)?;
        Ok(Cluster { inner })
    }

    /// Registers a data node with the given raw capacity.
    fn add_node(&mut self, node_id: &str, raw_capacity: SizeArg) -> PyResult<()> {
        let raw = raw_capacity.into_bytes()?;
        self.inner
            .register_node(node_id, raw)
            .map_err(cluster_err)?;
        Ok(())
    }

    /// Stores a file and returns its manifest as a dict.
    fn store<'py>(
        &mut self,
        py: Python<'py>,
        file_id: &str,
        size: SizeArg,
    ) -> PyResult<Bound<'py, PyDict>> {
        let bytes = size.into_bytes()?;
        let manifest = self.inner.store_file(file_id, bytes).map_err(cluster_err)?;
        let d = PyDict::new(py);
        d.set_item("file_id", &manifest.file_id)?;
        d.set_item("size", manifest.size)?;
        let blocks: Vec<Bound<'py, PyDict>> = manifest
            .blocks
            .iter()
            .map(|b| {
                let block = PyDict::new(py);
                block.set_item("block_id", &b.block_id)?;
                block.set_item("length", b.length)?;
                block.set_item("replicas", b.replicas.clone())?;
                block.set_item("under_replicated", b.under_replicated)?;
                Ok(block)
            })
            .collect::<PyResult<_>>()?;
        d.set_item("blocks", blocks)?;
        Ok(d)
    }

    /// Deletes a file and returns how many bytes were released across all
    /// replicas. Raises KeyError for unknown files.
    fn delete(&mut self, file_id: &str) -> PyResult<u64> {
        self.inner.delete_file(file_id).map_err(cluster_err)
    }

    /// Cluster-wide usage summary with one entry per node.
    fn usage<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let report = self.inner.usage_report();
        let d = PyDict::new(py);
        d.set_item("total_raw", report.total_raw)?;
        d.set_item("total_usable", report.total_usable)?;
        d.set_item("total_used", report.total_used)?;
        d.set_item("average_used_per_node", report.average_used_per_node)?;
        d.set_item("usable_fraction", report.usable_fraction)?;
        let nodes: Vec<Bound<'py, PyDict>> = report
            .nodes
            .iter()
            .map(|n| {
                let node = PyDict::new(py);
                node.set_item("node_id", &n.node_id)?;
                node.set_item("raw_capacity", n.raw_capacity)?;
                node.set_item("usable_capacity", n.usable_capacity)?;
                node.set_item("used", n.used)?;
                node.set_item("free", n.free)?;
                node.set_item("replica_count", n.replica_count)?;
                Ok(node)
            })
            .collect::<PyResult<_>>()?;
        d.set_item("nodes", nodes)?;
        Ok(d)
    }

    /// Re-checks every internal invariant; raises ValueError on corruption.
    fn verify(&self) -> PyResult<()> {
        self.inner.verify().map_err(cluster_err)
    }

    /// The canonical JSON document for the full cluster state.
    fn export_state(&self) -> String {
        self.inner.export_state()
    }

    /// Rebuilds a cluster from an exported document, validating it fully.
    #[staticmethod]
    fn import_state(json: &str) -> PyResult<Cluster> {
        let inner = StorageCluster::import_state(json).map_err(cluster_err)?;
        Ok(Cluster { inner })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn file_count(&self) -> usize {
        self.inner.metadata().len()
    }

    #[getter]
    fn total_used(&self) -> u64 {
        self.inner.total_used()
    }

    #[getter]
    fn capacity(&self) -> u64 {
        self.inner.cluster_capacity()
    }

    fn __repr__(&self) -> String {
        format!(
            "Cluster(nodes={}, files={}, used={})",
            self.inner.node_count(),
            self.inner.metadata().len(),
            self.inner.total_used()
        )
    }
}

/// Splits a file into block lengths, full blocks first and any remainder
/// last. Sizes may be integers or unit strings.
#[pyfunction]
#[pyo3(name = "split_into_blocks")]
fn split_into_blocks_py(file_size: SizeArg, block_size: SizeArg) -> PyResult<Vec<u64>> {
    let block = block_size.into_bytes()?;
    if block == 0 {
        return Err(PyValueError::new_err("block size must be positive"));
    }
    Ok(storq::cluster::split_into_blocks(
        file_size.into_bytes()?,
        block,
    ))
}

/// Parses a size string like "80 GB" or "64 MiB" into bytes.
#[pyfunction]
fn parse_size(text: &str) -> PyResult<u64> {
    text.parse::<ByteSize>()
        .map(ByteSize::as_u64)
        .map_err(PyValueError::new_err)
}

/// Runs a scenario file through the same runners as the CLI and returns the
/// resulting table as a CSV string.
#[pyfunction]
fn scenario_csv(path: &str) -> PyResult<String> {
    match load_scenario(std::path::Path::new(path)).map_err(scenario_err)? {
        Scenario::Sweep(sweep) => Ok(run_sweep(&sweep).to_csv()),
        Scenario::Capacity(capacity) => Ok(run_capacity(&capacity).to_csv()),
    }
}

/// Per-node usage CSV after ingesting a capacity scenario's workload.
#[pyfunction]
fn ingest_csv(path: &str) -> PyResult<String> {
    match load_scenario(std::path::Path::new(path)).map_err(scenario_err)? {
        Scenario::Capacity(capacity) => Ok(run_ingest(&capacity).0.to_csv()),
        Scenario::Sweep(_) => Err(PyValueError::new_err(format!(
            "{path}: not a capacity scenario"
        ))),
    }
}

#[pymodule]
fn storq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Queue>()?;
    m.add_class::<Cluster>()?;
    m.add_function(wrap_pyfunction!(split_into_blocks_py, m)?)?;
    m.add_function(wrap_pyfunction!(parse_size, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_csv, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_csv, m)?)?;
    Ok(())
}
