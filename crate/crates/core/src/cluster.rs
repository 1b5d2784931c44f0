//! In-memory model of a replicated block-storage cluster.
//!
//! Files are split into fixed-size blocks, blocks are replicated across data
//! nodes, and every capacity figure is exact integer bytes. The model is the
//! bookkeeping a name node would do, without any I/O: node inventory, block
//! placement, and a metadata store mapping files to block locations.

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
    #[error("node {0:?} is already registered")]
    DuplicateNode(String),
    #[error("file {0:?} is already stored")]
    DuplicateFile(String),
    #[error("no such file {0:?}")]
    UnknownFile(String),
    #[error("no node has room for block {block_index} of {file_id:?} ({needed} bytes)")]
    InsufficientSpace {
        file_id: String,
        block_index: usize,
        needed: u64,
    },
    #[error("no eligible node for a {needed}-byte block")]
    NoEligibleNode { needed: u64 },
    #[error("invalid cluster state: {0}")]
    InvalidState(String),
    #[error("malformed state document: {0}")]
    Malformed(String),
}

/// A byte count. In JSON it is either a plain integer or a string with a
/// unit, e.g. `"80 GB"` or `"64 MiB"`. Decimal units are powers of ten,
/// binary units powers of two; the two are never conflated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ByteSize(pub u64);

impl ByteSize {
    pub fn as_u64(self) -> u64 {
        self.0
    }
}

impl From<u64> for ByteSize {
    fn from(v: u64) -> Self {
        ByteSize(v)
    }
}

impl fmt::Display for ByteSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const UNITS: &[(&str, u64)] = &[
    ("B", 1),
    ("KB", 1_000),
    ("MB", 1_000_000),
    ("GB", 1_000_000_000),
    ("TB", 1_000_000_000_000),
    ("KiB", 1 << 10),
    ("MiB", 1 << 20),
    ("GiB", 1 << 30),
    ("TiB", 1 << 40),
];

impl FromStr for ByteSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s.find(|c: char| !c.is_ascii_digit()).ok_or_else(|| {
            format!("size {s:?} has no unit; use e.g. \"80 GB\" or a bare integer byte count")
        })?;
        let (number, unit) = s.split_at(split);
        if number.is_empty() {
            return Err(format!("size {s:?} must start with an integer"));
        }
        let value: u64 = number
            .parse()
            .map_err(|_| format!("size {s:?} has an unparsable number"))?;
        let unit = unit.trim();
        let multiplier = UNITS
            .iter()
            .find(|(name, _)| *name == unit)
            .map(|(_, m)| *m)
            .ok_or_else(|| format!("unknown size unit {unit:?} in {s:?}"))?;
        value
            .checked_mul(multiplier)
            .map(ByteSize)
            .ok_or_else(|| format!("size {s:?} overflows"))
    }
}

impl Serialize for ByteSize {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u64(self.0)
    }
}

impl<'de> Deserialize<'de> for ByteSize {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ByteSizeVisitor;

        impl Visitor<'_> for ByteSizeVisitor {
            type Value = ByteSize;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a byte count as an integer or a string like \"80 GB\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ByteSize, E> {
                Ok(ByteSize(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ByteSize, E> {
                u64::try_from(v)
                    .map(ByteSize)
                    .map_err(|_| E::custom("byte count cannot be negative"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ByteSize, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ByteSizeVisitor)
    }
}

/// Per-node capacity reserved for the operating system, either a flat byte
/// count or a fraction of the raw disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OsOverhead {
    Absolute(ByteSize),
    Fraction(f64),
}

impl OsOverhead {
    /// Flat 10 GB per node, the default.
    pub const DEFAULT_ABSOLUTE: OsOverhead = OsOverhead::Absolute(ByteSize(10_000_000_000));
    /// The measured install footprint on an 80 GB disk, 9.8125 percent.
    pub const MEASURED_FRACTION: OsOverhead = OsOverhead::Fraction(0.098125);

    /// Usable bytes remaining on a disk of `raw` bytes. The fractional form
    /// rounds to the nearest byte; the absolute form saturates at zero.
    pub fn usable_bytes(&self, raw: u64) -> u64 {
        match *self {
            OsOverhead::Absolute(b) => raw.saturating_sub(b.0),
            OsOverhead::Fraction(f) => (raw as f64 * (1.0 - f)).round() as u64,
        }
    }

    fn validate(&self) -> Result<(), ClusterError> {
        if let OsOverhead::Fraction(f) = *self {
            if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(ClusterError::InvalidConfig(format!(
                    "overhead fraction must be in [0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }
}

fn default_block_size() -> ByteSize {
    ByteSize(64 << 20)
}

fn default_replication() -> u32 {
    3
}

fn default_overhead() -> OsOverhead {
    OsOverhead::DEFAULT_ABSOLUTE
}

/// Cluster-wide constants fixed at construction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    /// Block split size. Defaults to 64 MiB.
    #[serde(default = "default_block_size")]
    pub block_size: ByteSize,
    /// Copies kept of every block. Defaults to 3.
    #[serde(default = "default_replication")]
    pub replication_factor: u32,
    /// Per-node OS reservation. Defaults to a flat 10 GB.
    #[serde(default = "default_overhead")]
    pub os_overhead: OsOverhead,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            block_size: default_block_size(),
            replication_factor: default_replication(),
            os_overhead: default_overhead(),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.block_size.0 == 0 {
            return Err(ClusterError::InvalidConfig(
                "block_size must be positive".into(),
            ));
        }
        if self.replication_factor == 0 {
            return Err(ClusterError::InvalidConfig(
                "replication_factor must be at least 1".into(),
            ));
        }
        self.os_overhead.validate()
    }
}

/// Splits a file into block lengths: full blocks plus a short final block
/// for the remainder. A zero-byte file has no blocks.
pub fn split_into_blocks(file_size: u64, block_size: u64) -> Vec<u64> {
    assert!(block_size > 0, "block_size must be positive");
    let full = (file_size / block_size) as usize;
    let remainder = file_size % block_size;
    let mut blocks = vec![block_size; full];
    if remainder > 0 {
        blocks.push(remainder);
    }
    blocks
}

/// One data node's live bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct DataNodeState {
    node_id: String,
    raw_capacity: u64,
    usable_capacity: u64,
    used: u64,
    stored_replicas: BTreeSet<String>,
}

impl DataNodeState {
    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn raw_capacity(&self) -> u64 {
        self.raw_capacity
    }

    /// Raw capacity minus the OS reservation, fixed at registration.
    pub fn usable_capacity(&self) -> u64 {
        self.usable_capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn free(&self) -> u64 {
        self.usable_capacity - self.used
    }

    /// Block ids of the replicas this node holds.
    pub fn stored_replicas(&self) -> &BTreeSet<String> {
        &self.stored_replicas
    }
}

/// Where the replicas of one block would go.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub nodes: Vec<String>,
    /// Set when fewer nodes were eligible than the replication factor asked
    /// for. The block is stored degraded rather than rejected.
    pub under_replicated: bool,
}

/// One block's metadata: identity, length, and replica locations.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInfo {
    pub block_id: String,
    pub length: u64,
    pub replicas: Vec<String>,
    pub under_replicated: bool,
}

/// A stored file: its size and the blocks it was split into, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct FileManifest {
    pub file_id: String,
    pub size: u64,
    pub blocks: Vec<BlockInfo>,
}

impl FileManifest {
    /// Bytes occupied across the cluster by all replicas of this file.
    pub fn replicated_bytes(&self) -> u64 {
        self.blocks
            .iter()
            .map(|b| b.length * b.replicas.len() as u64)
            .sum()
    }
}

/// The name node's file table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetadataStore {
    manifests: BTreeMap<String, FileManifest>,
}

impl MetadataStore {
    pub fn get(&self, file_id: &str) -> Option<&FileManifest> {
        self.manifests.get(file_id)
    }

    pub fn contains(&self, file_id: &str) -> bool {
        self.manifests.contains_key(file_id)
    }

    pub fn len(&self) -> usize {
        self.manifests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifests.is_empty()
    }

    pub fn files(&self) -> impl Iterator<Item = &FileManifest> {
        self.manifests.values()
    }

    pub fn total_blocks(&self) -> usize {
        self.manifests.values().map(|m| m.blocks.len()).sum()
    }

    fn insert(&mut self, manifest: FileManifest) {
        self.manifests.insert(manifest.file_id.clone(), manifest);
    }

    fn remove(&mut self, file_id: &str) -> Option<FileManifest> {
        self.manifests.remove(file_id)
    }
}

/// Usage figures for one node, all exact bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeUsage {
    pub node_id: String,
    pub raw_capacity: u64,
    pub usable_capacity: u64,
    pub used: u64,
    pub free: u64,
    pub replica_count: u64,
}

/// Cluster-wide usage summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsageReport {
    pub nodes: Vec<NodeUsage>,
    pub total_raw: u64,
    pub total_usable: u64,
    pub total_used: u64,
    /// total_used / node count; 0.0 for an empty cluster.
    pub average_used_per_node: f64,
    /// total_usable / total_raw; 0.0 for an empty cluster.
    pub usable_fraction: f64,
}

/// The whole cluster: config, node inventory, and file metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageCluster {
    config: ClusterConfig,
    nodes: BTreeMap<String, DataNodeState>,
    metadata: MetadataStore,
}

impl StorageCluster {
    pub fn new(config: ClusterConfig) -> Result<Self, ClusterError> {
        config.validate()?;
        Ok(Self {
            config,
            nodes: BTreeMap::new(),
            metadata: MetadataStore::default(),
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn register_node(
        &mut self,
        node_id: &str,
        raw_capacity: u64,
    ) -> Result<&DataNodeState, ClusterError> {
        if node_id.is_empty() {
            return Err(ClusterError::InvalidState(
                "node id must be nonempty".into(),
            ));
        }
        if self.nodes.contains_key(node_id) {
            return Err(ClusterError::DuplicateNode(node_id.to_string()));
        }
        let usable = self.config.os_overhead.usable_bytes(raw_capacity);
        let node = DataNodeState {
            node_id: node_id.to_string(),
            raw_capacity,
            usable_capacity: usable,
            used: 0,
            stored_replicas: BTreeSet::new(),
        };
        Ok(self.nodes.entry(node_id.to_string()).or_insert(node))
    }

    pub fn node(&self, node_id: &str) -> Option<&DataNodeState> {
        self.nodes.get(node_id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &DataNodeState> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn metadata(&self) -> &MetadataStore {
        &self.metadata
    }

    pub fn manifest(&self, file_id: &str) -> Option<&FileManifest> {
        self.metadata.get(file_id)
    }

    /// Sum of usable capacity over all nodes.
    pub fn cluster_capacity(&self) -> u64 {
        self.nodes.values().map(|n| n.usable_capacity).sum()
    }

    pub fn total_used(&self) -> u64 {
        self.nodes.values().map(|n| n.used).sum()
    }

    /// Number of stored blocks currently holding fewer replicas than the
    /// replication factor asks for.
    pub fn under_replicated_blocks(&self) -> usize {
        self.metadata
            .files()
            .flat_map(|m| &m.blocks)
            .filter(|b| b.under_replicated)
            .count()
    }

    /// Chooses target nodes for one block against the committed state:
    /// least-used nodes first, node id as the tiebreak. Returns fewer than
    /// `replication_factor` nodes (flagged) when space is short, and an error
    /// only when no node fits the block at all.
    pub fn place_replicas(
        &self,
        block_length: u64,
        replication_factor: u32,
    ) -> Result<Placement, ClusterError> {
        self.place_with_overlay(block_length, replication_factor, &BTreeMap::new())
    }

    /// Placement against committed state plus `pending` bytes already
    /// promised to each node by the surrounding transaction.
    fn place_with_overlay(
        &self,
        block_length: u64,
        replication_factor: u32,
        pending: &BTreeMap<String, u64>,
    ) -> Result<Placement, ClusterError> {
        let load = |n: &DataNodeState| n.used + pending.get(&n.node_id).copied().unwrap_or(0);
        // BTreeMap iteration is id-ordered and the sort is stable, so equal
        // loads fall back to id order automatically.
        let mut eligible: Vec<&DataNodeState> = self
            .nodes
            .values()
            .filter(|n| {
                n.usable_capacity
                    .checked_sub(load(n))
                    .is_some_and(|free| free >= block_length)
            })
            .collect();
        eligible.sort_by_key(|n| load(n));
        if eligible.is_empty() {
            return Err(ClusterError::NoEligibleNode {
                needed: block_length,
            });
        }
        let take = (replication_factor as usize).min(eligible.len());
        Ok(Placement {
            nodes: eligible[..take]
                .iter()
                .map(|n| n.node_id.to_string())
                .collect(),
            under_replicated: take < replication_factor as usize,
        })
    }

    /// Splits the file into blocks, places every replica, and commits the
    /// whole file atomically: if any block cannot be placed anywhere, no
    /// state changes at all.
    pub fn store_file(&mut self, file_id: &str, size: u64) -> Result<&FileManifest, ClusterError> {
        if file_id.is_empty() {
            return Err(ClusterError::InvalidState(
                "file id must be nonempty".into(),
            ));
        }
        if self.metadata.contains(file_id) {
            return Err(ClusterError::DuplicateFile(file_id.to_string()));
        }

        let lengths = split_into_blocks(size, self.config.block_size.0);
        let mut pending: BTreeMap<String, u64> = BTreeMap::new();
        let mut blocks = Vec::with_capacity(lengths.len());
        for (index, &length) in lengths.iter().enumerate() {
            let placement = self
                .place_with_overlay(length, self.config.replication_factor, &pending)
                .map_err(|_| ClusterError::InsufficientSpace {
                    file_id: file_id.to_string(),
                    block_index: index,
                    needed: length,
                })?;
            for node_id in &placement.nodes {
                *pending.entry(node_id.clone()).or_insert(0) += length;
            }
            blocks.push(BlockInfo {
                block_id: format!("{file_id}:{index}"),
                length,
                replicas: placement.nodes,
                under_replicated: placement.under_replicated,
            });
        }

        for block in &blocks {
            for node_id in &block.replicas {
                let node = self
                    .nodes
                    .get_mut(node_id)
                    .expect("placement chose a registered node");
                node.used += block.length;
                node.stored_replicas.insert(block.block_id.clone());
            }
        }
        self.metadata.insert(FileManifest {
            file_id: file_id.to_string(),
            size,
            blocks,
        });
        Ok(self.metadata.get(file_id).unwrap())
    }

    /// Removes a file and releases every replica. Returns the bytes freed
    /// across the cluster.
    pub fn delete_file(&mut self, file_id: &str) -> Result<u64, ClusterError> {
        let manifest = self
            .metadata
            .remove(file_id)
            .ok_or_else(|| ClusterError::UnknownFile(file_id.to_string()))?;
        let mut released = 0;
        for block in &manifest.blocks {
            for node_id in &block.replicas {
                let node = self
                    .nodes
                    .get_mut(node_id)
                    .expect("manifest references a registered node");
                node.used -= block.length;
                node.stored_replicas.remove(&block.block_id);
                released += block.length;
            }
        }
        Ok(released)
    }

    pub fn usage_report(&self) -> UsageReport {
        let nodes: Vec<NodeUsage> = self
            .nodes
            .values()
            .map(|n| NodeUsage {
                node_id: n.node_id.clone(),
                raw_capacity: n.raw_capacity,
                usable_capacity: n.usable_capacity,
                used: n.used,
                free: n.free(),
                replica_count: n.stored_replicas.len() as u64,
            })
            .collect();
        let total_raw: u64 = nodes.iter().map(|n| n.raw_capacity).sum();
        let total_usable: u64 = nodes.iter().map(|n| n.usable_capacity).sum();
        let total_used: u64 = nodes.iter().map(|n| n.used).sum();
        UsageReport {
            total_raw,
            total_usable,
            total_used,
            average_used_per_node: if nodes.is_empty() {
                0.0
            } else {
                total_used as f64 / nodes.len() as f64
            },
            usable_fraction: if total_raw == 0 {
                0.0
            } else {
                total_usable as f64 / total_raw as f64
            },
            nodes,
        }
    }

    /// Full internal consistency check. Cheap enough to run after every
    /// mutation in tests.
    pub fn verify(&self) -> Result<(), ClusterError> {
        let fail = |msg: String| Err(ClusterError::InvalidState(msg));
        let mut expected_used: BTreeMap<&str, u64> = BTreeMap::new();
        let mut expected_replicas: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for manifest in self.metadata.files() {
            let lengths = split_into_blocks(manifest.size, self.config.block_size.0);
            if lengths.len() != manifest.blocks.len() {
                return fail(format!(
                    "file {:?} has {} blocks, split says {}",
                    manifest.file_id,
                    manifest.blocks.len(),
                    lengths.len()
                ));
            }
            for (block, &length) in manifest.blocks.iter().zip(&lengths) {
                if block.length != length {
                    return fail(format!("block {:?} length drifted", block.block_id));
                }
                if block.replicas.is_empty() {
                    return fail(format!("block {:?} has no replicas", block.block_id));
                }
                let distinct: BTreeSet<&String> = block.replicas.iter().collect();
                if distinct.len() != block.replicas.len() {
                    return fail(format!("block {:?} repeats a node", block.block_id));
                }
                let degraded = block.replicas.len() < self.config.replication_factor as usize;
                if block.under_replicated != degraded {
                    return fail(format!(
                        "block {:?} mislabels replication state",
                        block.block_id
                    ));
                }
                for node_id in &block.replicas {
                    let Some(node) = self.nodes.get(node_id) else {
                        return fail(format!(
                            "block {:?} references unknown node {node_id:?}",
                            block.block_id
                        ));
                    };
                    *expected_used.entry(node.node_id.as_str()).or_insert(0) += block.length;
                    expected_replicas
                        .entry(node.node_id.as_str())
                        .or_default()
                        .insert(block.block_id.clone());
                }
            }
        }
        for node in self.nodes.values() {
            let used = expected_used
                .get(node.node_id.as_str())
                .copied()
                .unwrap_or(0);
            if node.used != used {
                return fail(format!(
                    "node {:?} used {} but manifests account for {used}",
                    node.node_id, node.used
                ));
            }
            if node.used > node.usable_capacity {
                return fail(format!("node {:?} is over capacity", node.node_id));
            }
            let replicas = expected_replicas
                .remove(node.node_id.as_str())
                .unwrap_or_default();
            if node.stored_replicas != replicas {
                return fail(format!("node {:?} replica set drifted", node.node_id));
            }
        }
        Ok(())
    }

    /// Serializes the full cluster state to canonical JSON: sorted node and
    /// file order, sizes as plain byte integers.
    pub fn export_state(&self) -> String {
        let doc = StateDoc {
            config: self.config,
            nodes: self
                .nodes
                .values()
                .map(|n| NodeDoc {
                    node_id: n.node_id.clone(),
                    raw_capacity: ByteSize(n.raw_capacity),
                    used: ByteSize(n.used),
                })
                .collect(),
            files: self
                .metadata
                .files()
                .map(|m| FileDoc {
                    file_id: m.file_id.clone(),
                    size: ByteSize(m.size),
                    blocks: m
                        .blocks
                        .iter()
                        .map(|b| BlockDoc {
                            block_id: b.block_id.clone(),
                            length: ByteSize(b.length),
                            replicas: b.replicas.clone(),
                            under_replicated: b.under_replicated,
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut json = serde_json::to_string_pretty(&doc).expect("state serializes");
        json.push('\n');
        json
    }

    /// Rebuilds a cluster from an exported document, replaying the recorded
    /// placements rather than re-placing blocks, and validating everything:
    /// unknown fields, unknown nodes, duplicate replicas, capacity overruns,
    /// and recorded `used` totals that do not match the manifests.
    pub fn import_state(json: &str) -> Result<Self, ClusterError> {
        let doc: StateDoc =
            serde_json::from_str(json).map_err(|e| ClusterError::Malformed(e.to_string()))?;
        let mut cluster = StorageCluster::new(doc.config)?;
        for node in &doc.nodes {
            cluster.register_node(&node.node_id, node.raw_capacity.0)?;
        }
        let mut seen_blocks: BTreeSet<&str> = BTreeSet::new();
        for file in &doc.files {
            if cluster.metadata.contains(&file.file_id) {
                return Err(ClusterError::DuplicateFile(file.file_id.clone()));
            }
            let mut blocks = Vec::with_capacity(file.blocks.len());
            for block in &file.blocks {
                if !seen_blocks.insert(&block.block_id) {
                    return Err(ClusterError::InvalidState(format!(
                        "block id {:?} appears twice",
                        block.block_id
                    )));
                }
                for node_id in &block.replicas {
                    let node = cluster.nodes.get_mut(node_id).ok_or_else(|| {
                        ClusterError::InvalidState(format!(
                            "block {:?} references unknown node {node_id:?}",
                            block.block_id
                        ))
                    })?;
                    node.used = node.used.checked_add(block.length.0).ok_or_else(|| {
                        ClusterError::InvalidState(format!("node {node_id:?} usage overflows"))
                    })?;
                    node.stored_replicas.insert(block.block_id.clone());
                }
                blocks.push(BlockInfo {
                    block_id: block.block_id.clone(),
                    length: block.length.0,
                    replicas: block.replicas.clone(),
                    under_replicated: block.under_replicated,
                });
            }
            cluster.metadata.insert(FileManifest {
                file_id: file.file_id.clone(),
                size: file.size.0,
                blocks,
            });
        }
        for node in &doc.nodes {
            let live = cluster.nodes.get(&node.node_id).expect("registered above");
            if live.used != node.used.0 {
                return Err(ClusterError::InvalidState(format!(
                    "node {:?} records {} used bytes but manifests account for {}",
                    node.node_id, node.used.0, live.used
                )));
            }
        }
        cluster.verify()?;
        Ok(cluster)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    config: ClusterConfig,
    nodes: Vec<NodeDoc>,
    files: Vec<FileDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    node_id: String,
    raw_capacity: ByteSize,
    used: ByteSize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    file_id: String,
    size: ByteSize,
    blocks: Vec<BlockDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockDoc {
    block_id: String,
    length: ByteSize,
    replicas: Vec<String>,
    under_replicated: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MB: u64 = 1_000_000;
    const GB: u64 = 1_000_000_000;

    fn default_cluster(nodes: usize, raw_per_node: u64) -> StorageCluster {
        let mut cluster = StorageCluster::new(ClusterConfig::default()).unwrap();
        for i in 0..nodes {
            cluster
                .register_node(&format!("d{i:03}"), raw_per_node)
                .unwrap();
        }
        cluster
    }

    /// Decimal 64 MB blocks, matching round-number workloads.
    fn decimal_config() -> ClusterConfig {
        ClusterConfig {
            block_size: ByteSize(64 * MB),
            ..ClusterConfig::default()
        }
    }

    fn decimal_cluster(nodes: usize, raw_per_node: u64) -> StorageCluster {
        let mut cluster = StorageCluster::new(decimal_config()).unwrap();
        for i in 0..nodes {
            cluster
                .register_node(&format!("d{i:03}"), raw_per_node)
                .unwrap();
        }
        cluster
    }

    #[test]
    fn byte_size_parsing() {
        assert_eq!("80 GB".parse::<ByteSize>().unwrap(), ByteSize(80 * GB));
        assert_eq!("64 MiB".parse::<ByteSize>().unwrap(), ByteSize(67_108_864));
        assert_eq!("64MB".parse::<ByteSize>().unwrap(), ByteSize(64 * MB));
        assert_eq!("1 TiB".parse::<ByteSize>().unwrap(), ByteSize(1 << 40));
        assert_eq!("512 B".parse::<ByteSize>().unwrap(), ByteSize(512));
        assert!("80 XB".parse::<ByteSize>().is_err());
        assert!("eighty GB".parse::<ByteSize>().is_err());
        assert!("-1 GB".parse::<ByteSize>().is_err());
        assert!("99999999999 TB".parse::<ByteSize>().is_err());
    }

    #[test]
    fn byte_size_serde_accepts_numbers_and_strings() {
        assert_eq!(
            serde_json::from_str::<ByteSize>("123").unwrap(),
            ByteSize(123)
        );
        assert_eq!(
            serde_json::from_str::<ByteSize>("\"100 MB\"").unwrap(),
            ByteSize(100 * MB)
        );
        assert_eq!(serde_json::to_string(&ByteSize(123)).unwrap(), "123");
        assert!(serde_json::from_str::<ByteSize>("-5").is_err());
    }

    #[test]
    fn overhead_presets() {
        assert_eq!(OsOverhead::DEFAULT_ABSOLUTE.usable_bytes(80 * GB), 70 * GB);
        assert_eq!(OsOverhead::DEFAULT_ABSOLUTE.usable_bytes(5 * GB), 0);
        // 80 GB minus 9.8125 percent leaves exactly 72.15 GB.
        assert_eq!(
            OsOverhead::MEASURED_FRACTION.usable_bytes(80 * GB),
            72_150_000_000
        );
        assert_eq!(OsOverhead::Fraction(0.0).usable_bytes(123), 123);
        assert_eq!(OsOverhead::Fraction(1.0).usable_bytes(123), 0);
    }

    #[test]
    fn config_validation() {
        assert!(ClusterConfig::default().validate().is_ok());
        let bad_block = ClusterConfig {
            block_size: ByteSize(0),
            ..ClusterConfig::default()
        };
        assert!(matches!(
            bad_block.validate(),
            Err(ClusterError::InvalidConfig(_))
        ));
        let bad_repl = ClusterConfig {
            replication_factor: 0,
            ..ClusterConfig::default()
        };
        assert!(bad_repl.validate().is_err());
        let bad_fraction = ClusterConfig {
            os_overhead: OsOverhead::Fraction(1.5),
            ..ClusterConfig::default()
        };
        assert!(bad_fraction.validate().is_err());
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_into_blocks(0, 64 * MB), Vec::<u64>::new());
        assert_eq!(split_into_blocks(64 * MB, 64 * MB), vec![64 * MB]);
        assert_eq!(split_into_blocks(100 * MB, 64 * MB), vec![64 * MB, 36 * MB]);
        let blocks = split_into_blocks(1000 * MB, 64 * MB);
        assert_eq!(blocks.len(), 16);
        assert_eq!(blocks[15], 40 * MB);
        assert!(blocks[..15].iter().all(|&b| b == 64 * MB));
        assert_eq!(split_into_blocks(1, 64 * MB), vec![1]);
    }

    #[test]
    fn registration_and_capacity() {
        let mut cluster = default_cluster(5, 80 * GB);
        assert_eq!(cluster.node_count(), 5);
        assert_eq!(cluster.node("d000").unwrap().usable_capacity(), 70 * GB);
        assert_eq!(cluster.cluster_capacity(), 350 * GB);
        assert!(matches!(
            cluster.register_node("d000", 80 * GB),
            Err(ClusterError::DuplicateNode(_))
        ));
        let empty = StorageCluster::new(ClusterConfig::default()).unwrap();
        assert_eq!(empty.cluster_capacity(), 0);
    }

    #[test]
    fn twenty_nodes_give_1400_gb() {
        let cluster = default_cluster(20, 80 * GB);
        assert_eq!(cluster.cluster_capacity(), 1400 * GB);
    }

    #[test]
    fn placement_prefers_least_used_then_id() {
        let mut cluster = decimal_cluster(5, 80 * GB);
        let p = cluster.place_replicas(64 * MB, 3).unwrap();
        assert_eq!(p.nodes, vec!["d000", "d001", "d002"]);
        assert!(!p.under_replicated);

        // Load d000 and d001; the next single replica goes to d002.
        cluster.store_file("warm", 128 * MB).unwrap();
        let p = cluster.place_replicas(64 * MB, 1).unwrap();
        // After storing 2 blocks at replication 3 on 5 nodes, the least
        // loaded nodes are the ones holding one replica fewer.
        assert_eq!(p.nodes.len(), 1);
        let loads: BTreeMap<&str, u64> = cluster.nodes().map(|n| (n.node_id(), n.used())).collect();
        let min = loads.values().min().unwrap();
        assert_eq!(loads[p.nodes[0].as_str()], *min);
    }

    #[test]
    fn placement_degrades_below_replication_factor() {
        let cluster = decimal_cluster(2, 80 * GB);
        let p = cluster.place_replicas(64 * MB, 3).unwrap();
        assert_eq!(p.nodes.len(), 2);
        assert!(p.under_replicated);
    }

    #[test]
    fn placement_fails_with_no_room() {
        let cluster = decimal_cluster(2, 10 * GB); // usable 0 after overhead
        assert!(matches!(
            cluster.place_replicas(64 * MB, 3),
            Err(ClusterError::NoEligibleNode { .. })
        ));
    }

    #[test]
    fn store_accounts_every_replica() {
        let mut cluster = decimal_cluster(5, 80 * GB);
        let manifest = cluster.store_file("f001", 1000 * MB).unwrap();
        assert_eq!(manifest.blocks.len(), 16);
        assert_eq!(manifest.replicated_bytes(), 3000 * MB);
        assert!(manifest.blocks.iter().all(|b| b.replicas.len() == 3));
        assert!(manifest.blocks.iter().all(|b| !b.under_replicated));
        assert_eq!(cluster.total_used(), 3000 * MB);
        let report = cluster.usage_report();
        assert_eq!(report.average_used_per_node, 600.0 * MB as f64);
        cluster.verify().unwrap();
    }

    #[test]
    fn store_empty_file_is_metadata_only() {
        let mut cluster = decimal_cluster(3, 80 * GB);
        let manifest = cluster.store_file("empty", 0).unwrap();
        assert!(manifest.blocks.is_empty());
        assert_eq!(cluster.total_used(), 0);
        cluster.verify().unwrap();
    }

    #[test]
    fn store_rejects_duplicates() {
        let mut cluster = decimal_cluster(3, 80 * GB);
        cluster.store_file("f", 10 * MB).unwrap();
        assert!(matches!(
            cluster.store_file("f", 10 * MB),
            Err(ClusterError::DuplicateFile(_))
        ));
    }

    #[test]
    fn failed_store_changes_nothing() {
        // Usable 2 GB per node, so a 3 GB file at replication 3 runs out of
        // room partway through its 47 blocks.
        let mut config = decimal_config();
        config.os_overhead = OsOverhead::Absolute(ByteSize(78 * GB));
        let mut cluster = StorageCluster::new(config).unwrap();
        for i in 0..3 {
            cluster.register_node(&format!("d{i:03}"), 80 * GB).unwrap();
        }
        cluster.store_file("keeper", 100 * MB).unwrap();
        let before = cluster.export_state();

        let err = cluster.store_file("too-big", 3000 * MB).unwrap_err();
        assert!(matches!(err, ClusterError::InsufficientSpace { .. }));
        assert_eq!(cluster.export_state(), before);
        cluster.verify().unwrap();
    }

    #[test]
    fn under_replicated_store_is_flagged_not_rejected() {
        let mut cluster = decimal_cluster(2, 80 * GB);
        let manifest = cluster.store_file("f", 64 * MB).unwrap();
        assert_eq!(manifest.blocks[0].replicas.len(), 2);
        assert!(manifest.blocks[0].under_replicated);
        assert_eq!(cluster.under_replicated_blocks(), 1);
        cluster.verify().unwrap();
    }

    #[test]
    fn delete_releases_exactly_what_store_took() {
        let mut cluster = decimal_cluster(5, 80 * GB);
        let before = cluster.export_state();
        cluster.store_file("f001", 1000 * MB).unwrap();
        let released = cluster.delete_file("f001").unwrap();
        assert_eq!(released, 3000 * MB);
        assert_eq!(cluster.total_used(), 0);
        assert_eq!(cluster.export_state(), before);
        assert!(matches!(
            cluster.delete_file("f001"),
            Err(ClusterError::UnknownFile(_))
        ));
    }

    #[test]
    fn usage_report_fractions() {
        let cluster = default_cluster(4, 80 * GB);
        let report = cluster.usage_report();
        assert_eq!(report.total_raw, 320 * GB);
        assert_eq!(report.total_usable, 280 * GB);
        assert_eq!(report.usable_fraction, 0.875);
        assert_eq!(report.average_used_per_node, 0.0);

        let config = ClusterConfig {
            os_overhead: OsOverhead::MEASURED_FRACTION,
            ..ClusterConfig::default()
        };
        let mut cluster = StorageCluster::new(config).unwrap();
        for i in 0..4 {
            cluster.register_node(&format!("d{i:03}"), 80 * GB).unwrap();
        }
        assert_eq!(cluster.usage_report().usable_fraction, 0.901875);
    }

    #[test]
    fn export_import_roundtrip_is_byte_identical() {
        let mut cluster = decimal_cluster(5, 80 * GB);
        cluster.store_file("a", 100 * MB).unwrap();
        cluster.store_file("b", 1000 * MB).unwrap();
        cluster.delete_file("a").unwrap();
        cluster.store_file("c", 1).unwrap();
        let exported = cluster.export_state();
        let imported = StorageCluster::import_state(&exported).unwrap();
        assert_eq!(imported.export_state(), exported);
        assert_eq!(imported, cluster);
    }

    #[test]
    fn import_rejects_tampered_state() {
        let mut cluster = decimal_cluster(3, 80 * GB);
        cluster.store_file("f", 64 * MB).unwrap();
        let good = cluster.export_state();

        // Renaming only the node document leaves replicas pointing at a
        // node id that no longer exists.
        let unknown_node = good.replace("\"node_id\": \"d000\"", "\"node_id\": \"ghost\"");
        assert!(unknown_node != good, "fixture should hit a real field");
        assert!(matches!(
            StorageCluster::import_state(&unknown_node),
            Err(ClusterError::InvalidState(_))
        ));

        // A consistent rename of both the node and its replica references
        // is still a valid state and imports cleanly.
        let renamed = good.replace("\"d000\"", "\"renamed\"");
        assert!(StorageCluster::import_state(&renamed).is_ok());

        let wrong_used = good.replace("\"used\": 64000000", "\"used\": 1");
        assert!(wrong_used != good, "fixture should hit a real field");
        assert!(matches!(
            StorageCluster::import_state(&wrong_used),
            Err(ClusterError::InvalidState(_))
        ));

        let unknown_field = good.replace("\"files\":", "\"extra\": 1, \"files\":");
        assert!(matches!(
            StorageCluster::import_state(&unknown_field),
            Err(ClusterError::Malformed(_))
        ));

        assert!(matches!(
            StorageCluster::import_state("{"),
            Err(ClusterError::Malformed(_))
        ));
    }

    proptest! {
        #[test]
        fn split_conserves_bytes(size in 0u64..10_000_000_000, block in 1u64..200_000_000) {
            let blocks = split_into_blocks(size, block);
            prop_assert_eq!(blocks.iter().sum::<u64>(), size);
            prop_assert_eq!(blocks.len() as u64, size.div_ceil(block));
            for (i, &len) in blocks.iter().enumerate() {
                if i + 1 < blocks.len() {
                    prop_assert_eq!(len, block);
                } else {
                    prop_assert!(len >= 1 && len <= block);
                }
            }
        }

        #[test]
        fn random_ops_preserve_invariants(
            sizes in proptest::collection::vec(0u64..400 * MB, 1..20),
            deletes in proptest::collection::vec(proptest::bool::ANY, 1..20),
        ) {
            let mut cluster = decimal_cluster(4, 10 * GB + 64 * MB * 40);
            let mut live: Vec<String> = Vec::new();
            for (i, (&size, &delete)) in sizes.iter().zip(&deletes).enumerate() {
                if delete && !live.is_empty() {
                    let id = live.remove(i % live.len());
                    cluster.delete_file(&id).unwrap();
                } else {
                    let id = format!("f{i}");
                    if cluster.store_file(&id, size).is_ok() {
                        live.push(id);
                    }
                }
                cluster.verify().unwrap();
                prop_assert!(cluster.total_used() <= cluster.cluster_capacity());
            }
            for id in live {
                cluster.delete_file(&id).unwrap();
            }
            prop_assert_eq!(cluster.total_used(), 0);
            cluster.verify().unwrap();
        }
    }
}
