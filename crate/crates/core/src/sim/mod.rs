//! Discrete-event execution of a schedule: slot-limited queues, fair-share
//! transfers, stragglers, node failure, prefetching and queue-tail
//! migration.

mod engine;
pub mod monitor;
pub mod policy;

pub use engine::{simulate, simulate_with_failure, Failure};
pub use monitor::{
    choose_prefetch_source, lambda_gate, lambda_or_default, plf, remaining_time, resource_quotient, should_migrate, LoadPoint, PlfForm,
    QueueState, RqForm,
};
pub use policy::{epsilon_greedy_migration, Candidate, MigrationCap, QTable};

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterError, ClusterGraph, NodeId};
use crate::placement::PlacementError;
use crate::seed;
use crate::workload::{BlockId, TaskId};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid runtime configuration: {0}")]
    Config(String),
    #[error("schedule does not match the workload: {0}")]
    Schedule(String),
    #[error("no live replica to choose from")]
    NoReplica,
    #[error("block {0} lost: every replica holder failed")]
    DataLost(BlockId),
    #[error("simulation stalled at t = {0:.3} s with unfinished tasks")]
    Stalled(f64),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    /// Threshold as a fraction of the node's reference task time.
    pub phi: f64,
    /// Migrations per node per monitoring round.
    pub theta_mig: u32,
    pub rq_scale: f64,
    pub rq_form: RqForm,
    pub lambda_theta: u32,
    pub epsilon: f64,
    /// Multiplicative epsilon decay per round.
    pub epsilon_decay: f64,
    pub q_alpha: f64,
    pub q_gamma: f64,
    /// Monitoring round length, s.
    pub round_s: f64,
    pub prefetch: bool,
    /// Queued non-local tasks fetched ahead per node.
    pub prefetch_depth: usize,
    pub migration: bool,
    pub plf: PlfForm,
    /// Relative std of execution-time noise.
    pub noise: f64,
    /// Fraction of every link taken by background traffic.
    pub background_load: f64,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            phi: 0.075,
            theta_mig: 3,
            rq_scale: 0.2,
            rq_form: RqForm::Scaled,
            lambda_theta: 1,
            epsilon: 0.1,
            epsilon_decay: 0.95,
            q_alpha: 0.5,
            q_gamma: 0.9,
            round_s: 1.0,
            prefetch: true,
            prefetch_depth: 1,
            migration: true,
            plf: PlfForm::Euclidean,
            noise: 0.05,
            background_load: 0.0,
        }
    }
}

impl RuntimeConfig {
    /// Plain queue execution: no prefetching, no migration.
    pub fn passive() -> Self {
        RuntimeConfig { prefetch: false, migration: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(0.05..=0.1).contains(&self.phi) {
            return bad(format!("phi {} outside [0.05, 0.1]", self.phi));
        }
        if !(1..=5).contains(&self.theta_mig) {
            return bad(format!("theta_mig {} outside [1, 5]", self.theta_mig));
        }
        if !(0.1..=0.3).contains(&self.rq_scale) {
            return bad(format!("rq_scale {} outside [0.1, 0.3]", self.rq_scale));
        }
        if self.lambda_theta < 1 {
            return bad("lambda_theta must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.epsilon_decay) {
            return bad("epsilon and epsilon_decay must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.q_alpha) || !(0.0..1.0).contains(&self.q_gamma) {
            return bad("q_alpha must lie in [0, 1] and q_gamma in [0, 1)".into());
        }
        if !(self.round_s > 0.0) || !(self.noise >= 0.0) || self.noise >= 0.3 {
            return bad("round_s must be positive and noise in [0, 0.3)".into());
        }
        if !(0.0..=0.9).contains(&self.background_load) {
            return bad(format!("background_load {} outside [0, 0.9]", self.background_load));
        }
        Ok(())
    }
}

/// Slows a seeded `fraction` of nodes by `slowdown` (CPU and disk).
/// Returns the modified graph and the slowed node ids, ascending.
pub fn inject_stragglers(g: &ClusterGraph, fraction: f64, slowdown: f64, seed: u64) -> Result<(ClusterGraph, Vec<NodeId>), SimError> {
    if !(0.0..1.0).contains(&fraction) || !(slowdown >= 1.0) {
        return Err(SimError::Config(format!("straggler fraction {fraction} must be in [0, 1) and slowdown {slowdown} >= 1")));
    }
    let count = (fraction * g.len() as f64).round() as usize;
    if count == 0 || slowdown == 1.0 {
        return Ok((g.clone(), Vec::new()));
    }
    let mut ids: Vec<NodeId> = g.node_ids().collect();
    ids.shuffle(&mut seed::rng(seed));
    let mut slowed = ids[..count].to_vec();
    slowed.sort();
    Ok((g.with_slowdown(&slowed, slowdown), slowed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Start,
    Finish,
    Transfer,
    Prefetch,
    Migrate,
    Fail,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Finish => "finish",
            EventKind::Transfer => "transfer",
            EventKind::Prefetch => "prefetch",
            EventKind::Migrate => "migrate",
            EventKind::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time_s: f64,
    pub kind: EventKind,
    /// `None` for node-level events.
    pub task: Option<TaskId>,
    pub node: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: TaskId,
    pub node: NodeId,
    pub start_s: f64,
    pub finish_s: f64,
    pub local: bool,
    pub migrated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub completion_s: f64,
    pub locality: f64,
    /// MB processed per second of completion time.
    pub throughput_mb_s: f64,
    /// MB moved across the network.
    pub network_mb: f64,
    pub recovery_s: Option<f64>,
    pub migrations: usize,
    pub prefetches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub events: Vec<SimEvent>,
    /// One record per task, in workload order.
    pub tasks: Vec<TaskRecord>,
    pub metrics: SimMetrics,
}

impl SimTrace {
    /// `time_s,kind,task,node` rows with node names.
    pub fn write_events_csv<W: Write>(&self, g: &ClusterGraph, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| SimError::Export(e.to_string());
        w.write_record(["time_s", "kind", "task", "node"]).map_err(err)?;
        for e in &self.events {
            let task = e.task.map(|t| t.0.to_string()).unwrap_or_default();
            let node = g.node(e.node).map(|n| n.name.clone()).unwrap_or_else(|_| e.node.0.to_string());
            w.write_record([format!("{:.6}", e.time_s), e.kind.as_str().to_string(), task, node]).map_err(err)?;
        }
        w.flush().map_err(|e| SimError::Export(e.to_string()))
    }

    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.metrics).expect("metrics serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_cluster, ClusterConfig};

    #[test]
    fn default_config_is_valid_and_ranges_enforced() {
        RuntimeConfig::default().validate().unwrap();
        RuntimeConfig::passive().validate().unwrap();
        assert!(RuntimeConfig { phi: 0.2, ..RuntimeConfig::default() }.validate().is_err());
        assert!(RuntimeConfig { theta_mig: 0, ..RuntimeConfig::default() }.validate().is_err());
        assert!(RuntimeConfig { theta_mig: 6, ..RuntimeConfig::default() }.validate().is_err());
        assert!(RuntimeConfig { q_gamma: 1.0, ..RuntimeConfig::default() }.validate().is_err());
        let parsed: RuntimeConfig = serde_json::from_str(r#"{"phi": 0.05, "plf": "guarded-ratio"}"#).unwrap();
        assert_eq!(parsed.plf, PlfForm::GuardedRatio);
        assert_eq!(parsed.theta_mig, 3);
    }

    #[test]
    fn stragglers_are_seeded_and_scaled() {
        let g = build_cluster(&ClusterConfig::heterogeneous(20)).unwrap();
        let (same, none) = inject_stragglers(&g, 0.0, 4.0, 1).unwrap();
        assert!(none.is_empty());
        assert_eq!(same.nodes(), g.nodes());
        let (slow, ids) = inject_stragglers(&g, 0.1, 4.0, 7).unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(ids, inject_stragglers(&g, 0.1, 4.0, 7).unwrap().1);
        for id in &ids {
            assert_eq!(slow.node(*id).unwrap().cpu_ghz * 4.0, g.node(*id).unwrap().cpu_ghz);
        }
        assert!(inject_stragglers(&g, 1.0, 4.0, 1).is_err());
        assert!(inject_stragglers(&g, 0.1, 0.5, 1).is_err());
    }
}
