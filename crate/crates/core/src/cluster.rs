//! Heterogeneous cluster model: racks, nodes and the bandwidth-limited links
//! between them.
//!
//! The topology is two-tier. Every node hangs off its rack switch through a
//! NIC link, and every rack switch connects to the core through an uplink.
//! The path between two nodes is therefore fixed: NIC, NIC for an intra-rack
//! pair, and NIC, uplink, uplink, NIC for an inter-rack pair.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Megabits per second in one megabyte per second.
pub const MBIT_PER_MB: f64 = 8.0;

/// Dense node index inside a [`ClusterGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RackId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub usize);

/// Latency tier between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Local,
    IntraRack,
    InterRack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub name: String,
    /// Processing rate in GHz.
    pub cpu_ghz: f64,
    pub mem_gb: f64,
    /// Local disk read rate in MB/s.
    pub io_mbps: f64,
    /// Concurrent execution slots.
    pub slots: u32,
    /// Data volume (MB) the node accepts in one scheduling round; `None` is
    /// unbounded.
    pub capacity_mb: Option<f64>,
    pub loss_prob: f64,
    /// Cost units per CPU cycle.
    pub cost_per_cycle: f64,
    pub rack: RackId,
}

impl NodeSpec {
    /// Cycles per second.
    pub fn cycle_rate(&self) -> f64 {
        self.cpu_ghz * 1e9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkEnd {
    Node(NodeId),
    Rack(RackId),
    Core,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub id: LinkId,
    pub endpoints: (LinkEnd, LinkEnd),
    /// MB/s.
    pub bandwidth_mbps: f64,
    pub base_queue_delay_s: f64,
    pub cost_per_mb: f64,
}

/// A node-to-node route through the tiered topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub tier: Tier,
    pub links: Vec<LinkId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterError {
    #[error("cluster has no racks")]
    NoRacks,
    #[error("duplicate rack id `{0}`")]
    DuplicateRack(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` references unknown rack `{rack}`")]
    UnknownRack { node: String, rack: String },
    #[error("rack `{0}` has no nodes")]
    EmptyRack(String),
    #[error("node `{node}`: {field} must be positive")]
    NonPositive { node: String, field: &'static str },
    #[error("node `{0}`: loss probability outside [0, 1]")]
    LossOutOfRange(String),
    #[error("{0} must be positive")]
    InvalidNetwork(&'static str),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("cannot read cluster config: {0}")]
    Io(String),
    #[error("cannot parse cluster config: {0}")]
    Parse(String),
}

fn default_intra_ms() -> f64 {
    5.0
}

fn default_inter_ms() -> f64 {
    15.0
}

fn default_uplink_mbps() -> f64 {
    10_000.0
}

fn default_cost_per_mb() -> f64 {
    0.01
}

fn default_slots() -> u32 {
    1
}

fn default_cost_per_cycle() -> f64 {
    1e-10
}

/// One entry of `nodes[]` in a cluster config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: String,
    pub cpu_ghz: f64,
    pub mem_gb: f64,
    pub io_mbps: f64,
    #[serde(default = "default_slots")]
    pub slots: u32,
    #[serde(default)]
    pub loss_prob: f64,
    pub rack: String,
    #[serde(default = "default_cost_per_cycle")]
    pub cost_per_cycle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_mb: Option<f64>,
    /// NIC speed in Mbit/s; defaults to the cluster-wide link bandwidth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nic_mbps: Option<f64>,
}

/// Cluster config file. Bandwidths are in Mbit/s, latencies in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub racks: Vec<String>,
    pub nodes: Vec<NodeConfig>,
    pub link_bandwidth_mbps: f64,
    #[serde(default = "default_uplink_mbps")]
    pub uplink_bandwidth_mbps: f64,
    #[serde(default = "default_intra_ms")]
    pub intra_rack_latency_ms: f64,
    #[serde(default = "default_inter_ms")]
    pub inter_rack_latency_ms: f64,
    #[serde(default = "default_cost_per_mb")]
    pub cost_per_mb: f64,
}

/// Hardware classes used by the built-in profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Xeon,
    Ryzen,
    CoreI5,
    ArmEdge,
}

impl NodeClass {
    fn config(self, id: String, rack: String) -> NodeConfig {
        let (cpu_ghz, mem_gb, io_mbps, loss_prob, cost_per_cycle) = match self {
            NodeClass::Xeon => (3.0, 64.0, 500.0, 0.001, 1.2e-10),
            NodeClass::Ryzen => (3.6, 32.0, 450.0, 0.001, 1.0e-10),
            NodeClass::CoreI5 => (2.5, 16.0, 250.0, 0.002, 0.8e-10),
            NodeClass::ArmEdge => (1.2, 4.0, 60.0, 0.01, 0.3e-10),
        };
        NodeConfig {
            id,
            cpu_ghz,
            mem_gb,
            io_mbps,
            slots: 1,
            loss_prob,
            rack,
            cost_per_cycle,
            capacity_mb: None,
            nic_mbps: None,
        }
    }
}

impl ClusterConfig {
    /// `racks` racks of `per_rack` identical nodes.
    pub fn uniform(racks: usize, per_rack: usize, cpu_ghz: f64, io_mbps: f64, link_mbps: f64) -> Self {
        let rack_names: Vec<String> = (0..racks).map(|r| format!("r{}", r + 1)).collect();
        let nodes = rack_names
            .iter()
            .flat_map(|rack| {
                (0..per_rack).map(move |i| NodeConfig {
                    id: format!("{rack}n{}", i + 1),
                    cpu_ghz,
                    mem_gb: 16.0,
                    io_mbps,
                    slots: 1,
                    loss_prob: 0.0,
                    rack: rack.clone(),
                    cost_per_cycle: default_cost_per_cycle(),
                    capacity_mb: None,
                    nic_mbps: None,
                })
            })
            .collect();
        ClusterConfig {
            racks: rack_names,
            nodes,
            link_bandwidth_mbps: link_mbps,
            uplink_bandwidth_mbps: default_uplink_mbps(),
            intra_rack_latency_ms: default_intra_ms(),
            inter_rack_latency_ms: default_inter_ms(),
            cost_per_mb: default_cost_per_mb(),
        }
    }

    /// Mixed cluster of `n` nodes, 10 per rack. Four in five nodes are
    /// compute nodes cycling Xeon, Ryzen, Core i5; the rest are ARM edge
    /// devices grouped at the end.
    pub fn heterogeneous(n: usize) -> Self {
        let edge = n / 5;
        let compute = n - edge;
        let classes = [NodeClass::Xeon, NodeClass::Ryzen, NodeClass::CoreI5];
        let per_rack = 10;
        let rack_count = n.div_ceil(per_rack).max(1);
        let racks: Vec<String> = (0..rack_count).map(|r| format!("rack{}", r + 1)).collect();
        let nodes = (0..n)
            .map(|i| {
                let class = if i < compute { classes[i % classes.len()] } else { NodeClass::ArmEdge };
                class.config(format!("node{:03}", i + 1), racks[i / per_rack].clone())
            })
            .collect();
        ClusterConfig {
            racks,
            nodes,
            link_bandwidth_mbps: 1000.0,
            uplink_bandwidth_mbps: default_uplink_mbps(),
            intra_rack_latency_ms: default_intra_ms(),
            inter_rack_latency_ms: default_inter_ms(),
            cost_per_mb: default_cost_per_mb(),
        }
    }

    /// 50 nodes: 40 compute + 10 ARM edge, 1 Gbps, 5 ms.
    pub fn default_profile() -> Self {
        Self::heterogeneous(50)
    }

    /// Resizes a cluster, keeping the class mix: shrinking samples the node
    /// list at even strides, growing cycles it. Racks hold as many nodes as
    /// the template's largest rack.
    pub fn resized(&self, n: usize) -> Self {
        if self.nodes.is_empty() {
            return self.clone();
        }
        let mut per_rack_count: HashMap<&str, usize> = HashMap::new();
        for node in &self.nodes {
            *per_rack_count.entry(node.rack.as_str()).or_default() += 1;
        }
        let per_rack = per_rack_count.values().copied().max().unwrap_or(1).max(1);
        let rack_count = n.div_ceil(per_rack).max(1);
        let racks: Vec<String> = (0..rack_count).map(|r| format!("rack{}", r + 1)).collect();
        let nodes = (0..n)
            .map(|i| {
                let len = self.nodes.len();
                let mut node = self.nodes[if n <= len { i * len / n } else { i % len }].clone();
                node.id = format!("node{:03}", i + 1);
                node.rack = racks[i / per_rack].clone();
                node
            })
            .collect();
        ClusterConfig { racks, nodes, ..self.clone() }
    }

    pub fn from_json(text: &str) -> Result<Self, ClusterError> {
        serde_json::from_str(text).map_err(|e| ClusterError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ClusterError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClusterError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster config serializes")
    }
}

/// Immutable, validated cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    rack_names: Vec<String>,
    racks: Vec<Vec<NodeId>>,
    node_link: Vec<LinkId>,
    rack_uplink: Vec<LinkId>,
    pub intra_rack_latency_s: f64,
    pub inter_rack_latency_s: f64,
}

/// Validates `config` and builds the graph. Node and rack order follow the
/// config, so the result is a pure function of its input.
pub fn build_cluster(config: &ClusterConfig) -> Result<ClusterGraph, ClusterError> {
    if config.racks.is_empty() {
        return Err(ClusterError::NoRacks);
    }
    if !(config.link_bandwidth_mbps > 0.0) {
        return Err(ClusterError::InvalidNetwork("link_bandwidth_mbps"));
    }
    if !(config.uplink_bandwidth_mbps > 0.0) {
        return Err(ClusterError::InvalidNetwork("uplink_bandwidth_mbps"));
    }
    if !(config.intra_rack_latency_ms >= 0.0 && config.inter_rack_latency_ms >= 0.0) {
        return Err(ClusterError::InvalidNetwork("rack latency"));
    }
    let mut rack_index = HashMap::new();
    for (i, name) in config.racks.iter().enumerate() {
        if rack_index.insert(name.as_str(), RackId(i)).is_some() {
            return Err(ClusterError::DuplicateRack(name.clone()));
        }
    }

    let mut seen = HashSet::new();
    let mut nodes = Vec::with_capacity(config.nodes.len());
    let mut racks = vec![Vec::new(); config.racks.len()];
    for (i, nc) in config.nodes.iter().enumerate() {
        if !seen.insert(nc.id.as_str()) {
            return Err(ClusterError::DuplicateNode(nc.id.clone()));
        }
        let rack = *rack_index.get(nc.rack.as_str()).ok_or_else(|| ClusterError::UnknownRack {
            node: nc.id.clone(),
            rack: nc.rack.clone(),
        })?;
        let positive = |v: f64, field: &'static str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ClusterError::NonPositive { node: nc.id.clone(), field })
            }
        };
        positive(nc.cpu_ghz, "cpu_ghz")?;
        positive(nc.mem_gb, "mem_gb")?;
        positive(nc.io_mbps, "io_mbps")?;
        positive(f64::from(nc.slots), "slots")?;
        if let Some(c) = nc.capacity_mb {
            positive(c, "capacity_mb")?;
        }
        if let Some(nic) = nc.nic_mbps {
            positive(nic, "nic_mbps")?;
        }
        if !(0.0..=1.0).contains(&nc.loss_prob) {
            return Err(ClusterError::LossOutOfRange(nc.id.clone()));
        }
        if nc.cost_per_cycle < 0.0 {
            return Err(ClusterError::NonPositive { node: nc.id.clone(), field: "cost_per_cycle" });
        }
        let id = NodeId(i);
        racks[rack.0].push(id);
        nodes.push(NodeSpec {
            id,
            name: nc.id.clone(),
            cpu_ghz: nc.cpu_ghz,
            mem_gb: nc.mem_gb,
            io_mbps: nc.io_mbps,
            slots: nc.slots,
            capacity_mb: nc.capacity_mb,
            loss_prob: nc.loss_prob,
            cost_per_cycle: nc.cost_per_cycle,
            rack,
        });
    }
    if let Some(empty) = racks.iter().position(Vec::is_empty) {
        return Err(ClusterError::EmptyRack(config.racks[empty].clone()));
    }

    let mut links = Vec::with_capacity(nodes.len() + racks.len());
    let mut node_link = Vec::with_capacity(nodes.len());
    for (node, nc) in nodes.iter().zip(&config.nodes) {
        let id = LinkId(links.len());
        links.push(LinkSpec {
            id,
            endpoints: (LinkEnd::Node(node.id), LinkEnd::Rack(node.rack)),
            bandwidth_mbps: nc.nic_mbps.unwrap_or(config.link_bandwidth_mbps) / MBIT_PER_MB,
            base_queue_delay_s: 0.0,
            cost_per_mb: config.cost_per_mb,
        });
        node_link.push(id);
    }
    let mut rack_uplink = Vec::with_capacity(racks.len());
    for r in 0..racks.len() {
        let id = LinkId(links.len());
        links.push(LinkSpec {
            id,
            endpoints: (LinkEnd::Rack(RackId(r)), LinkEnd::Core),
            bandwidth_mbps: config.uplink_bandwidth_mbps / MBIT_PER_MB,
            base_queue_delay_s: 0.0,
            cost_per_mb: config.cost_per_mb,
        });
        rack_uplink.push(id);
    }

    Ok(ClusterGraph {
        nodes,
        links,
        rack_names: config.racks.clone(),
        racks,
        node_link,
        rack_uplink,
        intra_rack_latency_s: config.intra_rack_latency_ms / 1000.0,
        inter_rack_latency_s: config.inter_rack_latency_ms / 1000.0,
    })
}

impl ClusterGraph {
    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeSpec, ClusterError> {
        self.nodes.get(id.0).ok_or(ClusterError::UnknownNode(id))
    }

    pub fn rack_count(&self) -> usize {
        self.racks.len()
    }

    pub fn rack_members(&self, rack: RackId) -> &[NodeId] {
        &self.racks[rack.0]
    }

    pub fn rack_name(&self, rack: RackId) -> &str {
        &self.rack_names[rack.0]
    }

    pub fn link(&self, id: LinkId) -> &LinkSpec {
        &self.links[id.0]
    }

    pub fn nic(&self, node: NodeId) -> LinkId {
        self.node_link[node.0]
    }

    pub fn tier(&self, a: NodeId, b: NodeId) -> Result<Tier, ClusterError> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        Ok(if a == b {
            Tier::Local
        } else if na.rack == nb.rack {
            Tier::IntraRack
        } else {
            Tier::InterRack
        })
    }

    /// Fixed latency of a tier in seconds.
    pub fn tier_latency(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Local => 0.0,
            Tier::IntraRack => self.intra_rack_latency_s,
            Tier::InterRack => self.inter_rack_latency_s,
        }
    }

    pub fn route(&self, a: NodeId, b: NodeId) -> Result<Route, ClusterError> {
        let tier = self.tier(a, b)?;
        let links = match tier {
            Tier::Local => Vec::new(),
            Tier::IntraRack => vec![self.nic(a), self.nic(b)],
            Tier::InterRack => {
                let (ra, rb) = (self.nodes[a.0].rack, self.nodes[b.0].rack);
                vec![self.nic(a), self.rack_uplink[ra.0], self.rack_uplink[rb.0], self.nic(b)]
            }
        };
        Ok(Route { tier, links })
    }

    /// Bottleneck bandwidth (MB/s) of the route from `a` to `b`.
    /// Returns `f64::INFINITY` when `a == b`: local data costs nothing to move.
    pub fn path_bandwidth(&self, a: NodeId, b: NodeId) -> Result<f64, ClusterError> {
        let route = self.route(a, b)?;
        Ok(bottleneck(route.links.iter().map(|l| self.links[l.0].bandwidth_mbps)))
    }

    /// Copy of the graph with the given nodes slowed down by `factor`
    /// (CPU and disk both divided).
    pub fn with_slowdown(&self, slowed: &[NodeId], factor: f64) -> ClusterGraph {
        let mut g = self.clone();
        for id in slowed {
            let n = &mut g.nodes[id.0];
            n.cpu_ghz /= factor;
            n.io_mbps /= factor;
        }
        g
    }
}

/// Minimum over a set of bandwidths; `INFINITY` for the empty set.
pub fn bottleneck(bandwidths: impl IntoIterator<Item = f64>) -> f64 {
    bandwidths.into_iter().fold(f64::INFINITY, f64::min)
}
