//! One repetition of one cell: build the environment once, then run each
//! scheduler through placement, assignment and simulation.

use super::{Cell, ExperimentConfig, ExperimentError, RunRow};
use crate::cluster::{build_cluster, ClusterConfig, ClusterGraph, NodeId};
use crate::placement::{place_heterogeneous_with, place_rack_aware, ClientPolicy, PlacementPlan, PREFILTER};
use crate::predictor::{fit_kernel_with, predict_matrix, ExecRecord, KernelFitConfig, LinearRegression, TimeMatrix};
use crate::sched::{baseline_rf_fd, baseline_round_robin, baseline_rsync, schedule_scc_dso, AcoConfig, Schedule, SchedulerKind, DEFAULT_SYNC_DELAY_S};
use crate::seed;
use crate::sim::{inject_stragglers, simulate, simulate_with_failure, Failure, RuntimeConfig, SimError, SimTrace};
use crate::truth::GroundTruth;
use crate::workload::{generate_workload, Workload, WorkloadProfile};

/// Everything shared by the schedulers of one `(cell, repetition)`.
pub struct Environment {
    pub seed: u64,
    /// Nominal cluster seen by the planners.
    pub planned: ClusterGraph,
    /// Cluster the simulation runs on, stragglers included.
    pub actual: ClusterGraph,
    pub stragglers: Vec<NodeId>,
    pub workload: Workload,
    pub history: Vec<ExecRecord>,
    kernel_times: Option<TimeMatrix>,
    linear_times: Option<TimeMatrix>,
}

impl Environment {
    pub fn build(cfg: &ExperimentConfig, cluster: &ClusterConfig, profile: Option<&WorkloadProfile>, cell: &Cell, rep: usize) -> Result<Self, ExperimentError> {
        let env_seed = seed::derive(cfg.seed, &[cell.index as u64, rep as u64]);
        let sized = if cell.nodes == cluster.nodes.len() { cluster.clone() } else { cluster.resized(cell.nodes) };
        let planned = build_cluster(&sized)?;
        let (actual, stragglers) = match cfg.stragglers {
            Some(s) => inject_stragglers(&planned, s.fraction, s.slowdown, seed::derive(env_seed, &[seed::label("stragglers")]))?,
            None => (planned.clone(), Vec::new()),
        };
        let profile = cell.profile(cfg, profile);
        let workload = generate_workload(env_seed, &profile)?;
        let truth = GroundTruth { noise: cfg.runtime.noise, seed: seed::derive(env_seed, &[seed::label("history")]) };
        let history = truth.history(&planned, cfg.history_records, env_seed);
        Ok(Environment { seed: env_seed, planned, actual, stragglers, workload, history, kernel_times: None, linear_times: None })
    }

    pub fn kernel_times(&mut self) -> Result<&TimeMatrix, ExperimentError> {
        if self.kernel_times.is_none() {
            let fit = KernelFitConfig { seed: self.seed, ..KernelFitConfig::default() };
            let model = fit_kernel_with(&self.history, &fit)?;
            self.kernel_times = Some(predict_matrix(&model, self.planned.nodes(), &self.workload.tasks)?);
        }
        Ok(self.kernel_times.as_ref().expect("just set"))
    }

    pub fn linear_times(&mut self) -> Result<&TimeMatrix, ExperimentError> {
        if self.linear_times.is_none() {
            let model = LinearRegression::fit(&self.history)?;
            self.linear_times = Some(predict_matrix(&model, self.planned.nodes(), &self.workload.tasks)?);
        }
        Ok(self.linear_times.as_ref().expect("just set"))
    }
}

/// A finished plan for one scheduler.
pub struct Planned {
    pub plan: PlacementPlan,
    pub schedule: Schedule,
    pub times: TimeMatrix,
    pub runtime: RuntimeConfig,
}

pub fn plan(env: &mut Environment, kind: SchedulerKind, aco: &AcoConfig, runtime: &RuntimeConfig, sched_seed: u64) -> Result<Planned, ExperimentError> {
    let passive = RuntimeConfig { noise: runtime.noise, ..RuntimeConfig::passive() };
    let tasks = env.workload.tasks.clone();
    match kind {
        SchedulerKind::SccDso | SchedulerKind::SccDsoLite => {
            let (times, cfg) = if kind == SchedulerKind::SccDso {
                (env.kernel_times()?.clone(), aco.clone())
            } else {
                (env.linear_times()?.clone(), AcoConfig { objective: aco.objective, ..AcoConfig::lightweight() })
            };
            let plan = place_heterogeneous_with(&env.planned, &env.workload, &times, PREFILTER)?;
            let (schedule, _) = schedule_scc_dso(&env.planned, &tasks, &plan, &times, &cfg, sched_seed)?;
            Ok(Planned { plan, schedule, times, runtime: runtime.clone() })
        }
        SchedulerKind::RfFd | SchedulerKind::Rsync | SchedulerKind::RoundRobin => {
            let times = env.linear_times()?.clone();
            let client = ClientPolicy::PerBlock(seed::derive(env.seed, &[seed::label("client")]));
            let plan = place_rack_aware(&env.planned, &env.workload, client)?;
            let schedule = match kind {
                SchedulerKind::RfFd => baseline_rf_fd(&env.planned, &tasks, &times)?,
                SchedulerKind::Rsync => baseline_rsync(&env.planned, &tasks, &plan, DEFAULT_SYNC_DELAY_S)?,
                _ => baseline_round_robin(&env.planned, &tasks),
            };
            Ok(Planned { plan, schedule, times, runtime: passive })
        }
    }
}

pub fn execute(env: &Environment, p: &Planned, failure: Option<Failure>) -> Result<SimTrace, SimError> {
    simulate_with_failure(&env.actual, &p.plan, &p.schedule, &env.workload.tasks, &p.times, &p.runtime, env.seed, failure)
}

/// Extra completion time when the node holding the most primaries fails
/// halfway through the clean run.
pub fn recovery_latency(env: &Environment, p: &Planned, clean: &SimTrace) -> Result<f64, SimError> {
    let counts = p.plan.primary_counts();
    let node = (0..counts.len()).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0);
    let failure = Failure { node: NodeId(node), at_s: clean.metrics.completion_s / 2.0 };
    Ok(execute(env, p, Some(failure))?.metrics.completion_s - clean.metrics.completion_s)
}

/// Runs one scheduler in an environment; errors become a failure row.
pub fn run_scheduler(cfg: &ExperimentConfig, env: &mut Environment, cell: &Cell, rep: usize, kind: SchedulerKind) -> RunRow {
    let sched_seed = seed::derive(cfg.seed, &[seed::label(kind.label()), cell.index as u64, rep as u64]);
    let mut row = RunRow::pending(cell, rep, kind, sched_seed);
    let mut aco = AcoConfig::preset(cfg.preset);
    aco.objective = cfg.objective.unwrap_or(aco.objective);
    let result = plan(env, kind, &aco, &cfg.runtime, sched_seed).and_then(|p| {
        let trace = simulate(&env.actual, &p.plan, &p.schedule, &env.workload.tasks, &p.times, &p.runtime, env.seed)?;
        let recovery = if cfg.recovery { recovery_latency(env, &p, &trace).ok() } else { None };
        Ok((p.schedule.iterations, trace, recovery))
    });
    match result {
        Ok((iterations, trace, recovery)) => row.fill(&trace.metrics, recovery, iterations),
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}
