//! Experiment harness: sweeps cells of (cluster size, input size,
//! replication, block size), repeats each with derived seeds, and aggregates
//! per scheduler.

pub mod emit;
pub mod pipeline;
mod stats;

pub use emit::{emit, summary_table, Format, Table};
pub use stats::{aggregate, Stat, Z95};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterConfig, ClusterError};
use crate::placement::PlacementError;
use crate::predictor::PredictorError;
use crate::sched::{AcoConfig, ObjectiveKind, Preset, SchedError, SchedulerKind};
use crate::sim::{RuntimeConfig, SimError, SimMetrics};
use crate::workload::{WorkloadError, WorkloadProfile};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ExperimentError {
    /// Errors a user can fix by editing the config or its referenced files.
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_) | ExperimentError::Cluster(_) | ExperimentError::Workload(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stragglers {
    pub fraction: f64,
    pub slowdown: f64,
}

/// Which metric and sweep dimension the summary table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableKind {
    #[default]
    CompletionBySize,
    LocalityByNodes,
    ThroughputByReplication,
    CompletionByNodes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Cluster config file; the built-in 50-node profile when absent.
    pub cluster: Option<PathBuf>,
    /// Workload profile file. When absent, each cell runs `apps` copies of
    /// one input of the cell's size.
    pub workload: Option<PathBuf>,
    pub schedulers: Vec<SchedulerKind>,
    pub table: TableKind,
    /// Input size per application, MB.
    pub file_sizes_mb: Vec<f64>,
    /// Overrides `file_sizes_mb` with `blocks_per_node * nodes` blocks.
    pub blocks_per_node: Option<f64>,
    pub apps: u32,
    pub block_sizes_mb: Vec<f64>,
    pub replication_factors: Vec<u32>,
    /// Cluster sizes; the config's own size when empty.
    pub node_counts: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub stragglers: Option<Stragglers>,
    pub preset: Preset,
    /// Replaces the preset's selection objective when set.
    pub objective: Option<ObjectiveKind>,
    pub runtime: RuntimeConfig,
    /// Training records drawn for the predictors.
    pub history_records: usize,
    /// Also measure recovery latency after a mid-run node failure.
    pub recovery: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            cluster: None,
            workload: None,
            schedulers: vec![SchedulerKind::RfFd, SchedulerKind::Rsync, SchedulerKind::SccDso],
            table: TableKind::CompletionBySize,
            file_sizes_mb: vec![20480.0],
            blocks_per_node: None,
            apps: 1,
            block_sizes_mb: vec![64.0],
            replication_factors: vec![1],
            node_counts: Vec::new(),
            repetitions: 50,
            seed: 42,
            stragglers: None,
            preset: Preset::Standard,
            objective: None,
            runtime: RuntimeConfig::default(),
            history_records: 200,
            recovery: false,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        cfg.cluster = cfg.cluster.as_deref().map(resolve);
        cfg.workload = cfg.workload.as_deref().map(resolve);
        cfg.output_dir = resolve(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.schedulers.is_empty() {
            return bad("at least one scheduler is required");
        }
        if self.block_sizes_mb.is_empty() || self.block_sizes_mb.iter().any(|b| !(*b > 0.0)) {
            return bad("block sizes must be positive");
        }
        if self.replication_factors.is_empty() || self.replication_factors.contains(&0) {
            return bad("replication factors must be at least 1");
        }
        if self.workload.is_none() && self.blocks_per_node.is_none() && (self.file_sizes_mb.is_empty() || self.file_sizes_mb.iter().any(|s| !(*s > 0.0))) {
            return bad("file sizes must be positive");
        }
        if self.blocks_per_node.is_some_and(|b| !(b > 0.0)) {
            return bad("blocks_per_node must be positive");
        }
        if self.apps == 0 {
            return bad("apps must be at least 1");
        }
        if self.node_counts.contains(&0) {
            return bad("node counts must be positive");
        }
        if self.history_records < 2 {
            return bad("history_records must be at least 2");
        }
        if let Some(s) = self.stragglers {
            if !(0.0..1.0).contains(&s.fraction) || !(s.slowdown >= 1.0) {
                return bad("straggler fraction must be in [0, 1) and slowdown at least 1");
            }
        }
        let mut dup = self.schedulers.clone();
        dup.sort();
        dup.dedup();
        if dup.len() != self.schedulers.len() {
            return bad("schedulers are listed twice");
        }
        self.runtime.validate()?;
        AcoConfig::preset(self.preset).validate()?;
        Ok(())
    }

    pub fn load_cluster(&self) -> Result<ClusterConfig, ExperimentError> {
        match &self.cluster {
            Some(p) => Ok(ClusterConfig::load(p)?),
            None => Ok(ClusterConfig::default_profile()),
        }
    }

    pub fn load_workload(&self) -> Result<Option<WorkloadProfile>, ExperimentError> {
        self.workload.as_deref().map(WorkloadProfile::load).transpose().map_err(Into::into)
    }

    /// Sweep cells in emission order: nodes, size, replication, block size.
    pub fn cells(&self, default_nodes: usize) -> Vec<Cell> {
        let nodes = if self.node_counts.is_empty() { vec![default_nodes] } else { self.node_counts.clone() };
        let sizes: Vec<Option<f64>> = if self.workload.is_some() || self.blocks_per_node.is_some() {
            vec![None]
        } else {
            self.file_sizes_mb.iter().map(|s| Some(*s)).collect()
        };
        let mut cells = Vec::new();
        for &n in &nodes {
            for &size in &sizes {
                for &rf in &self.replication_factors {
                    for &block in &self.block_sizes_mb {
                        let input_mb = size.or(self.blocks_per_node.map(|b| (b * n as f64).round() * block));
                        cells.push(Cell { index: cells.len(), nodes: n, input_mb, replication: rf, block_mb: block });
                    }
                }
            }
        }
        cells
    }
}

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub nodes: usize,
    /// Per-application input; `None` when a workload profile supplies it.
    pub input_mb: Option<f64>,
    pub replication: u32,
    pub block_mb: f64,
}

impl Cell {
    pub fn profile(&self, cfg: &ExperimentConfig, base: Option<&WorkloadProfile>) -> WorkloadProfile {
        match (base, self.input_mb) {
            (Some(p), _) => {
                let mut p = p.clone();
                for app in &mut p.apps {
                    app.block_size_mb = self.block_mb;
                    app.replication = self.replication;
                }
                p
            }
            (None, Some(input)) => WorkloadProfile::uniform_apps(cfg.apps, input, self.block_mb, self.replication),
            (None, None) => WorkloadProfile::uniform_apps(cfg.apps, self.block_mb, self.block_mb, self.replication),
        }
    }
}

/// Metrics of one run, or the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub cell: usize,
    pub nodes: usize,
    pub input_mb: Option<f64>,
    pub replication: u32,
    pub block_mb: f64,
    pub scheduler: SchedulerKind,
    pub rep: usize,
    pub seed: u64,
    /// `ok` or `error: ...`.
    pub status: String,
    pub completion_s: Option<f64>,
    pub locality: Option<f64>,
    pub throughput_mb_s: Option<f64>,
    pub network_mb: Option<f64>,
    pub recovery_s: Option<f64>,
    pub migrations: Option<usize>,
    pub iterations: Option<usize>,
}

impl RunRow {
    pub fn pending(cell: &Cell, rep: usize, scheduler: SchedulerKind, seed: u64) -> Self {
        RunRow {
            cell: cell.index,
            nodes: cell.nodes,
            input_mb: cell.input_mb,
            replication: cell.replication,
            block_mb: cell.block_mb,
            scheduler,
            rep,
            seed,
            status: "pending".into(),
            completion_s: None,
            locality: None,
            throughput_mb_s: None,
            network_mb: None,
            recovery_s: None,
            migrations: None,
            iterations: None,
        }
    }

    pub fn fill(&mut self, m: &SimMetrics, recovery: Option<f64>, iterations: usize) {
        self.status = "ok".into();
        self.completion_s = Some(m.completion_s);
        self.locality = Some(m.locality);
        self.throughput_mb_s = Some(m.throughput_mb_s);
        self.network_mb = Some(m.network_mb);
        self.recovery_s = recovery;
        self.migrations = Some(m.migrations);
        self.iterations = Some(iterations);
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: usize,
    pub nodes: usize,
    pub input_mb: Option<f64>,
    pub replication: u32,
    pub block_mb: f64,
    pub scheduler: SchedulerKind,
    pub runs: usize,
    pub failures: usize,
    pub completion_s: Option<Stat>,
    pub locality: Option<Stat>,
    pub throughput_mb_s: Option<Stat>,
    pub network_mb: Option<Stat>,
    pub recovery_s: Option<Stat>,
    pub migrations: Option<Stat>,
}

impl AggregateRow {
    pub fn from_runs(cell: &Cell, scheduler: SchedulerKind, runs: &[&RunRow]) -> Self {
        let ok: Vec<&&RunRow> = runs.iter().filter(|r| r.is_ok()).collect();
        let pick = |f: fn(&RunRow) -> Option<f64>| aggregate(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        AggregateRow {
            cell: cell.index,
            nodes: cell.nodes,
            input_mb: cell.input_mb,
            replication: cell.replication,
            block_mb: cell.block_mb,
            scheduler,
            runs: runs.len(),
            failures: runs.len() - ok.len(),
            completion_s: pick(|r| r.completion_s),
            locality: pick(|r| r.locality),
            throughput_mb_s: pick(|r| r.throughput_mb_s),
            network_mb: pick(|r| r.network_mb),
            recovery_s: pick(|r| r.recovery_s),
            migrations: pick(|r| r.migrations.map(|m| m as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub table: TableKind,
    pub cells: Vec<Cell>,
    pub schedulers: Vec<SchedulerKind>,
    /// Ordered by cell, scheduler (config order), repetition.
    pub runs: Vec<RunRow>,
    /// Ordered by cell, scheduler.
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn aggregate_for(&self, cell: usize, scheduler: SchedulerKind) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.cell == cell && a.scheduler == scheduler)
    }

    pub fn runs_for(&self, cell: usize, scheduler: SchedulerKind) -> impl Iterator<Item = &RunRow> {
        self.runs.iter().filter(move |r| r.cell == cell && r.scheduler == scheduler)
    }
}

/// Runs every `(cell, repetition)` in parallel; each builds one shared
/// environment and runs all schedulers in it. Output order does not depend
/// on thread scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    let cluster = cfg.load_cluster()?;
    let profile = cfg.load_workload()?;
    let cells = cfg.cells(cluster.nodes.len());
    let jobs: Vec<(usize, usize)> = cells.iter().flat_map(|c| (0..cfg.repetitions).map(move |r| (c.index, r))).collect();
    let per_job: Vec<Vec<RunRow>> = jobs
        .par_iter()
        .map(|&(ci, rep)| {
            let cell = &cells[ci];
            match pipeline::Environment::build(cfg, &cluster, profile.as_ref(), cell, rep) {
                Ok(mut env) => cfg.schedulers.iter().map(|&k| pipeline::run_scheduler(cfg, &mut env, cell, rep, k)).collect(),
                Err(e) => cfg
                    .schedulers
                    .iter()
                    .map(|&k| {
                        let mut row = RunRow::pending(cell, rep, k, 0);
                        row.status = format!("error: {e}");
                        row
                    })
                    .collect(),
            }
        })
        .collect();
    let mut runs: Vec<RunRow> = per_job.into_iter().flatten().collect();
    let order = |k: SchedulerKind| cfg.schedulers.iter().position(|s| *s == k).unwrap_or(usize::MAX);
    runs.sort_by_key(|r| (r.cell, order(r.scheduler), r.rep));
    let mut aggregates = Vec::new();
    for cell in &cells {
        for &k in &cfg.schedulers {
            let rs: Vec<&RunRow> = runs.iter().filter(|r| r.cell == cell.index && r.scheduler == k).collect();
            aggregates.push(AggregateRow::from_runs(cell, k, &rs));
        }
    }
    Ok(ExperimentResult { name: cfg.name.clone(), table: cfg.table, cells, schedulers: cfg.schedulers.clone(), runs, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
        let bad = ExperimentConfig { repetitions: 0, ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { schedulers: vec![], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { block_sizes_mb: vec![0.0], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn cells_cover_the_sweep() {
        let cfg = ExperimentConfig {
            file_sizes_mb: vec![100.0, 200.0],
            replication_factors: vec![1, 2, 3],
            block_sizes_mb: vec![32.0, 64.0],
            node_counts: vec![10, 20],
            ..ExperimentConfig::default()
        };
        let cells = cfg.cells(50);
        assert_eq!(cells.len(), 24);
        assert!(cells.iter().enumerate().all(|(i, c)| c.index == i));
        let per_node = ExperimentConfig { blocks_per_node: Some(4.0), node_counts: vec![10], ..cfg };
        assert_eq!(per_node.cells(50)[0].input_mb, Some(40.0 * 32.0));
    }

    #[test]
    fn single_repetition_has_zero_sd() {
        let cfg = ExperimentConfig {
            file_sizes_mb: vec![640.0],
            node_counts: vec![5],
            repetitions: 1,
            schedulers: vec![SchedulerKind::RfFd, SchedulerKind::SccDso],
            history_records: 60,
            ..ExperimentConfig::default()
        };
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.runs.len(), 2);
        assert!(res.runs.iter().all(RunRow::is_ok), "{:?}", res.runs);
        for a in &res.aggregates {
            assert_eq!(a.completion_s.unwrap().sd, 0.0);
        }
    }
}
