//! Locality-aware task scheduling for heterogeneous clusters: cluster and
//! workload models, replica placement, execution-time prediction, an ant
//! colony scheduler with baselines, and an event-driven simulator with
//! prefetching and queue-tail migration.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod experiment;
pub mod placement;
pub mod predictor;
pub mod qos;
pub mod sched;
pub mod seed;
pub mod sim;
pub mod truth;
pub mod workload;

pub use cluster::{build_cluster, ClusterConfig, ClusterGraph, NodeId};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentError, ExperimentResult};
pub use placement::PlacementPlan;
pub use predictor::TimeMatrix;
pub use sched::{AcoConfig, Schedule, SchedulerKind};
pub use sim::{simulate, RuntimeConfig, SimMetrics, SimTrace};
pub use workload::{TaskId, TaskSpec, Workload};
