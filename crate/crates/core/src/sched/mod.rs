//! Task-to-node assignment: the ant colony solver and the comparison
//! baselines.

mod aco;
mod baselines;
mod instance;
mod oracle;

pub use aco::{
    brute_force_makespan, construct_solution, selection_probabilities, solve, update_pheromones_ewma, update_pheromones_full,
    write_trace_csv, AcoConfig, AntSolution, Heuristic, ObjectiveKind, PheromoneMatrix, Preset, SolveReport, TraceRow, Variant,
};
pub use baselines::{baseline_rf_fd, baseline_round_robin, baseline_rsync, DEFAULT_SYNC_DELAY_S};
pub use instance::{Evaluation, Instance, L_MAX};
pub use oracle::{random_instance, run_oracle, OracleReport};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterError, ClusterGraph, NodeId};
use crate::placement::{order_queues, PlacementError, PlacementPlan};
use crate::predictor::{PredictorError, TimeMatrix};
use crate::workload::{TaskId, TaskSpec};

#[derive(Debug, thiserror::Error)]
pub enum SchedError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("malformed instance: {0}")]
    Shape(String),
    #[error("no feasible schedule found; best attempt left {unassigned} tasks unassigned (makespan {makespan:.3} s)")]
    NoFeasible { unassigned: usize, makespan: f64 },
    #[error("task {0} fits on no node")]
    Capacity(TaskId),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// A complete assignment with per-node execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub scheduler: SchedulerKind,
    /// Node of each task, indexed like the workload's task list.
    pub assignment: Vec<NodeId>,
    /// Execution order per node.
    pub queues: Vec<Vec<TaskId>>,
    /// Fixed extra latency per task, e.g. synchronization.
    pub extra_delay_s: Vec<f64>,
    /// Solver iterations; zero for one-pass baselines.
    pub iterations: usize,
}

impl Schedule {
    /// Queues in assignment order.
    fn in_order(scheduler: SchedulerKind, nodes: usize, tasks: &[TaskSpec], assignment: Vec<NodeId>, extra_delay_s: Vec<f64>) -> Self {
        let mut queues = vec![Vec::new(); nodes];
        for (t, n) in tasks.iter().zip(&assignment) {
            queues[n.0].push(t.id);
        }
        Schedule { scheduler, assignment, queues, extra_delay_s, iterations: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "scc-dso")]
    SccDso,
    #[serde(rename = "scc-dso-lite")]
    SccDsoLite,
    #[serde(rename = "rf-fd")]
    RfFd,
    #[serde(rename = "rsync")]
    Rsync,
    #[serde(rename = "rr")]
    RoundRobin,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] =
        [SchedulerKind::SccDso, SchedulerKind::SccDsoLite, SchedulerKind::RfFd, SchedulerKind::Rsync, SchedulerKind::RoundRobin];

    pub fn label(self) -> &'static str {
        match self {
            SchedulerKind::SccDso => "scc-dso",
            SchedulerKind::SccDsoLite => "scc-dso-lite",
            SchedulerKind::RfFd => "rf-fd",
            SchedulerKind::Rsync => "rsync",
            SchedulerKind::RoundRobin => "rr",
        }
    }

    /// Column title used in the result tables.
    pub fn title(self) -> &'static str {
        match self {
            SchedulerKind::SccDso => "SCC-DSO",
            SchedulerKind::SccDsoLite => "SCC-DSO-Lite",
            SchedulerKind::RfFd => "RF-FD",
            SchedulerKind::Rsync => "RSYNC",
            SchedulerKind::RoundRobin => "RR",
        }
    }

    pub fn is_scc(self) -> bool {
        matches!(self, SchedulerKind::SccDso | SchedulerKind::SccDsoLite)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| format!("unknown scheduler '{s}' (expected scc-dso, scc-dso-lite, rf-fd, rsync or rr)"))
    }
}

/// Colony assignment over predicted times
/// plus access cost, warm-started from the primary-replica queues, then
/// locality-first queue ordering.
pub fn schedule_scc_dso(
    g: &ClusterGraph,
    tasks: &[TaskSpec],
    plan: &PlacementPlan,
    times: &TimeMatrix,
    cfg: &AcoConfig,
    seed: u64,
) -> Result<(Schedule, SolveReport), SchedError> {
    let inst = Instance::build(g, tasks, plan, times, cfg.l_max)?;
    let warm = tasks.iter().map(|t| plan.primary(t.block).map(|n| n.0)).collect::<Result<Vec<_>, _>>()?;
    let report = solve(&inst, cfg, seed, Some(&warm))?;
    let assignment: Vec<NodeId> = report.best.assignment.iter().map(|a| NodeId(a.expect("feasible solution is complete"))).collect();
    let queues = order_queues(g, plan, tasks, &assignment, times)?;
    let kind = match cfg.variant {
        Variant::Full => SchedulerKind::SccDso,
        Variant::Lightweight => SchedulerKind::SccDsoLite,
    };
    let schedule = Schedule { scheduler: kind, assignment, queues, extra_delay_s: vec![0.0; tasks.len()], iterations: report.iterations };
    Ok((schedule, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_names_round_trip() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.label().parse::<SchedulerKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.label()));
        }
        assert!("fifo".parse::<SchedulerKind>().is_err());
    }
}
