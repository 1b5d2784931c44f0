//! Performance and capacity modeling for a PC-cluster block storage server.
//!
//! Four layers, each usable on its own:
//!
//! - [`queueing`]: exact closed-form steady-state analytics for the
//!   single-server M/M/1 queue that models the storage front end.
//! - [`markov`]: a truncated birth-death chain solved as a linear system, an
//!   independent numerical oracle for the closed forms.
//! - [`sim`]: a seeded discrete-event simulation of the same queue, for
//!   validating both analytical models against sampled behavior.
//! - [`cluster`]: an integer-exact model of block splitting, replica
//!   placement, and capacity accounting across data nodes.
//!
//! [`scenario`] and [`experiment`] tie the layers together: JSON scenario
//! files drive sweep, capacity, and ingest runs that emit deterministic CSV
//! tables. The `storq` binary is a thin CLI over those runners.

pub mod cluster;
pub mod experiment;
pub mod markov;
pub mod queueing;
pub mod scenario;
pub mod sim;

pub use cluster::{split_into_blocks, ByteSize, ClusterConfig, OsOverhead, StorageCluster};
pub use markov::TruncatedChain;
pub use queueing::{QueueParameters, SteadyStateMetrics};
pub use sim::{run_simulation, SimulationConfig, SimulationReport};
