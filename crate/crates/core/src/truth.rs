//! Ground-truth execution model used by the simulator and to generate
//! training histories for the predictors.
//!
//! `time = (cycles / cycle_rate + size / io) * (1 + 2 / mem_gb)`, optionally
//! scaled by multiplicative Gaussian noise keyed by `(seed, task, node)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterGraph, NodeSpec};
use crate::predictor::{features, ExecRecord, ExecTimeModel, PredictorError};
use crate::seed;
use crate::workload::{AppId, BlockId, TaskId, TaskSpec, DEFAULT_CYCLES_PER_MB};

/// Memory pressure term: small-memory nodes pay up to `1 + MEM_PENALTY_GB / mem`.
const MEM_PENALTY_GB: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Relative std of the multiplicative noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth { noise: 0.05, seed: 0 }
    }
}

impl GroundTruth {
    pub fn noiseless() -> Self {
        GroundTruth { noise: 0.0, seed: 0 }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        GroundTruth { seed, ..self }
    }

    /// Noise-free local execution time.
    pub fn base_time(node: &NodeSpec, task: &TaskSpec) -> f64 {
        let compute = task.compute_cycles / node.cycle_rate();
        let read = task.size_mb / node.io_mbps;
        (compute + read) * (1.0 + MEM_PENALTY_GB / node.mem_gb)
    }

    /// One realized execution time for `task` on `node`.
    pub fn sample(&self, node: &NodeSpec, task: &TaskSpec) -> f64 {
        let base = Self::base_time(node, task);
        if self.noise == 0.0 {
            return base;
        }
        let z = seed::normal(seed::derive(self.seed, &[task.id.0 as u64, node.id.0 as u64])).clamp(-3.0, 3.0);
        base * (1.0 + self.noise * z).max(0.05)
    }

    /// `n` historical records from random block sizes on random nodes of `g`.
    pub fn history(&self, g: &ClusterGraph, n: usize, seed: u64) -> Vec<ExecRecord> {
        let mut rng = seed::rng(seed);
        let nodes = g.nodes();
        (0..n)
            .map(|k| {
                let node = &nodes[rng.random_range(0..nodes.len())];
                let size = rng.random_range(1.0..=128.0);
                let task = TaskSpec {
                    id: TaskId(usize::MAX - k),
                    block: BlockId(0),
                    app: AppId(0),
                    size_mb: size,
                    resource_demand: 0.5,
                    compute_cycles: size * DEFAULT_CYCLES_PER_MB,
                    release_s: 0.0,
                    deadline_s: None,
                };
                let t = GroundTruth { seed: seed::derive(self.seed, &[seed]), ..*self }.sample(node, &task);
                ExecRecord { features: features(node, &task), observed_time_s: t }
            })
            .collect()
    }
}

impl ExecTimeModel for GroundTruth {
    /// Noise-free oracle, useful as a perfect predictor in tests.
    fn predict(&self, node: &NodeSpec, task: &TaskSpec) -> Result<f64, PredictorError> {
        Ok(Self::base_time(node, task))
    }

    fn feature_determined(&self) -> bool {
        true
    }
}
