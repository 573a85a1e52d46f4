//! Solver check against exhaustive enumeration on small random instances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{brute_force_makespan, solve, AcoConfig, Instance, ObjectiveKind, SchedError};
use crate::seed;

/// Random instance with 2..=`max_tasks` tasks, 2..=`max_nodes` nodes and
/// times uniform in [0.5, 10).
pub fn random_instance(seed: u64, max_tasks: usize, max_nodes: usize) -> Result<Instance, SchedError> {
    let mut rng = seed::rng(seed::derive(seed, &[seed::label("oracle")]));
    let b = rng.random_range(2..=max_tasks.max(2));
    let n = rng.random_range(2..=max_nodes.max(2));
    let times: Vec<Vec<f64>> = (0..b).map(|_| (0..n).map(|_| rng.random_range(0.5..10.0)).collect()).collect();
    Instance::from_times(&times, None, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub instances: usize,
    /// Instances within `tolerance` of the optimum.
    pub within: usize,
    pub tolerance: f64,
    pub worst_ratio: f64,
    /// `colony / optimum` per instance.
    pub ratios: Vec<f64>,
}

/// Solves `seeds` random instances with `cfg` (objective forced to
/// makespan) and compares against the exact optimum.
pub fn run_oracle(cfg: &AcoConfig, seeds: u64, max_tasks: usize, max_nodes: usize, tolerance: f64) -> Result<OracleReport, SchedError> {
    if max_tasks > 10 || max_nodes > 6 {
        return Err(SchedError::Config(format!("oracle limited to 10 tasks and 6 nodes, got {max_tasks} x {max_nodes}")));
    }
    let cfg = AcoConfig { objective: ObjectiveKind::Makespan, ..cfg.clone() };
    let mut ratios = Vec::with_capacity(seeds as usize);
    for s in 0..seeds {
        let inst = random_instance(s, max_tasks, max_nodes)?;
        let opt = brute_force_makespan(&inst).ok_or_else(|| SchedError::Shape("instance too large to enumerate".into()))?;
        let got = solve(&inst, &cfg, s, None)?.best.makespan;
        ratios.push(got / opt);
    }
    let within = ratios.iter().filter(|r| **r <= 1.0 + tolerance + 1e-12).count();
    let worst_ratio = ratios.iter().copied().fold(1.0, f64::max);
    Ok(OracleReport { instances: ratios.len(), within, tolerance, worst_ratio, ratios })
}
