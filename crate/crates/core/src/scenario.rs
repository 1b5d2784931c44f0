//! Scenario files: the JSON inputs that drive experiment runs.
//!
//! A scenario is a single JSON object with a `kind` discriminator, either
//! `"sweep"` (queueing experiments over a list of arrival rates) or
//! `"capacity"` (cluster sizing and ingest workloads). Parsing is strict:
//! unknown fields are rejected, and validation errors name the offending
//! field and value.

use crate::cluster::{ByteSize, ClusterConfig};
use crate::queueing::QueueParameters;
use crate::sim::SimulationConfig;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ScenarioError {
    fn invalid(path: &str, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            path: path.to_string(),
            message: message.into(),
        }
    }

    /// Process exit code the CLI maps this error to: 3 for I/O trouble,
    /// 2 for anything wrong with the scenario itself.
    pub fn exit_code(&self) -> u8 {
        match self {
            ScenarioError::Io { .. } => 3,
            _ => 2,
        }
    }
}

/// Which computation engines a sweep runs per row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    ClosedForm,
    Oracle,
    Sim,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::ClosedForm => "closed_form",
            Engine::Oracle => "oracle",
            Engine::Sim => "sim",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "closed_form" => Ok(Engine::ClosedForm),
            "oracle" => Ok(Engine::Oracle),
            "sim" => Ok(Engine::Sim),
            other => Err(format!(
                "unknown engine {other:?}, expected closed_form, oracle, or sim"
            )),
        }
    }
}

/// Seed and run length for the simulation engine.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: u64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
}

fn default_seed() -> u64 {
    42
}

fn default_jobs() -> u64 {
    1_000_000
}

fn default_warmup() -> u64 {
    100_000
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            jobs: default_jobs(),
            warmup: default_warmup(),
        }
    }
}

fn default_engines() -> Vec<Engine> {
    vec![Engine::ClosedForm]
}

fn default_truncation() -> usize {
    crate::markov::TruncatedChain::DEFAULT_TRUNCATION
}

/// A queueing sweep: one output row per arrival rate.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepScenario {
    #[allow(dead_code)]
    kind: String,
    pub arrival_rates: Vec<f64>,
    pub service_rate: f64,
    #[serde(default = "default_engines")]
    pub engines: Vec<Engine>,
    #[serde(default, alias = "sim_settings")]
    pub sim: Option<SimSettings>,
    /// Without this, any arrival rate at or above the service rate is a
    /// validation error. With it, such rows are emitted flagged.
    #[serde(default)]
    pub allow_saturated: bool,
    #[serde(default = "default_truncation")]
    pub oracle_truncation: usize,
}

impl SweepScenario {
    pub fn uses_engine(&self, engine: Engine) -> bool {
        self.engines.contains(&engine)
    }

    pub fn sim_settings(&self) -> SimSettings {
        self.sim.unwrap_or_default()
    }

    /// Rechecks the scenario, e.g. after command-line overrides edited it.
    /// `path` only labels error messages.
    pub fn validate(&self, path: &str) -> Result<(), ScenarioError> {
        if self.arrival_rates.is_empty() {
            return Err(ScenarioError::invalid(
                path,
                "arrival_rates must be nonempty",
            ));
        }
        if !self.service_rate.is_finite() || self.service_rate <= 0.0 {
            return Err(ScenarioError::invalid(
                path,
                format!(
                    "service_rate must be finite and positive, got {}",
                    self.service_rate
                ),
            ));
        }
        for (i, &rate) in self.arrival_rates.iter().enumerate() {
            QueueParameters::new(rate, self.service_rate)
                .map_err(|e| ScenarioError::invalid(path, format!("arrival_rates[{i}]: {e}")))?;
            if !self.allow_saturated && rate >= self.service_rate {
                return Err(ScenarioError::invalid(
                    path,
                    format!(
                        "arrival_rates[{i}] = {rate} is not below service_rate = {}; \
                         set allow_saturated to emit this row flagged",
                        self.service_rate
                    ),
                ));
            }
        }
        if self.engines.is_empty() {
            return Err(ScenarioError::invalid(path, "engines must be nonempty"));
        }
        if self.oracle_truncation < 1 {
            return Err(ScenarioError::invalid(
                path,
                "oracle_truncation must be at least 1",
            ));
        }
        if self.uses_engine(Engine::Sim) {
            let s = self.sim_settings();
            // Validate the template against any stable rate now, so a bad
            // run length fails before any computation starts.
            let probe = QueueParameters::new(self.service_rate / 2.0, self.service_rate)
                .expect("probe rates are valid");
            SimulationConfig::new(probe, s.seed, s.jobs, s.warmup)
                .map_err(|e| ScenarioError::invalid(path, format!("sim: {e}")))?;
        }
        Ok(())
    }
}

/// A cluster sizing scenario: one usage row per node count, plus an optional
/// ingest workload of file sizes.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityScenario {
    #[allow(dead_code)]
    kind: String,
    #[serde(alias = "node_count_range")]
    pub node_counts: Vec<u64>,
    pub per_node_raw: ByteSize,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub workload: Vec<ByteSize>,
}

impl CapacityScenario {
    pub fn validate(&self, path: &str) -> Result<(), ScenarioError> {
        if self.node_counts.is_empty() {
            return Err(ScenarioError::invalid(path, "node_counts must be nonempty"));
        }
        self.cluster
            .validate()
            .map_err(|e| ScenarioError::invalid(path, format!("cluster: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Scenario {
    Sweep(SweepScenario),
    Capacity(CapacityScenario),
}

#[derive(Deserialize)]
struct KindProbe {
    kind: String,
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_scenario(&text, &shown)
}

/// Parses scenario JSON. `path` is only used in error messages.
pub fn parse_scenario(text: &str, path: &str) -> Result<Scenario, ScenarioError> {
    let parse_err = |e: serde_json::Error| ScenarioError::Parse {
        path: path.to_string(),
        message: e.to_string(),
    };
    let probe: KindProbe = serde_json::from_str(text).map_err(parse_err)?;
    let scenario = match probe.kind.as_str() {
        "sweep" => Scenario::Sweep(serde_json::from_str(text).map_err(parse_err)?),
        "capacity" => Scenario::Capacity(serde_json::from_str(text).map_err(parse_err)?),
        other => {
            return Err(ScenarioError::invalid(
                path,
                format!("unknown scenario kind {other:?}, expected \"sweep\" or \"capacity\""),
            ))
        }
    };
    match &scenario {
        Scenario::Sweep(s) => s.validate(path)?,
        Scenario::Capacity(c) => c.validate(path)?,
    }
    Ok(scenario)
}
