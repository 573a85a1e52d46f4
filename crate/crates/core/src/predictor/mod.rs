//! Per-(node, task) execution-time prediction.
//!
//! Two predictors back the scheduler: a Gaussian-RBF kernel regression over
//! `[block MB, CPU GHz, memory GB, I/O MB/s]` and a lightweight linear model
//! over the task's normalized demand. A plain multiple linear regression is
//! also provided for the first-fit baseline.

mod kernel;
mod linear;

pub use kernel::{fit_kernel, fit_kernel_with, FeatureScaler, KernelFitConfig, KernelModel, MAX_SUPPORT};
pub use linear::{LinearModel, LinearRegression};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::NodeSpec;
use crate::workload::TaskSpec;

/// Predictions never fall below one millisecond.
pub const PREDICTION_FLOOR_S: f64 = 1e-3;

pub const FEATURES: usize = 4;

pub type Features = [f64; FEATURES];

/// `[block MB, CPU GHz, memory GB, I/O MB/s]`.
pub fn features(node: &NodeSpec, task: &TaskSpec) -> Features {
    [task.size_mb, node.cpu_ghz, node.mem_gb, node.io_mbps]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecRecord {
    pub features: Features,
    pub observed_time_s: f64,
}

impl ExecRecord {
    pub fn is_valid(&self) -> bool {
        self.features.iter().all(|f| f.is_finite() && *f >= 0.0)
            && self.observed_time_s.is_finite()
            && self.observed_time_s > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictorError {
    #[error("model has not been fitted")]
    Unfitted,
    #[error("need at least {need} training records, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("training record {0} has non-finite or negative values")]
    InvalidRecord(usize),
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),
    #[error("prediction is not finite")]
    NonFinite,
    #[error("model serialization: {0}")]
    Serde(String),
}

/// Anything that predicts how long `task` runs on `node` with local data.
pub trait ExecTimeModel: Send + Sync {
    fn predict(&self, node: &NodeSpec, task: &TaskSpec) -> Result<f64, PredictorError>;

    /// True when the prediction is a function of the node/task features,
    /// demand and compute cycles only, so equal inputs may share one call.
    fn feature_determined(&self) -> bool {
        false
    }
}

impl<T: ExecTimeModel + ?Sized> ExecTimeModel for &T {
    fn predict(&self, node: &NodeSpec, task: &TaskSpec) -> Result<f64, PredictorError> {
        (**self).predict(node, task)
    }

    fn feature_determined(&self) -> bool {
        (**self).feature_determined()
    }
}

impl<T: ExecTimeModel + ?Sized> ExecTimeModel for std::sync::Arc<T> {
    fn predict(&self, node: &NodeSpec, task: &TaskSpec) -> Result<f64, PredictorError> {
        (**self).predict(node, task)
    }

    fn feature_determined(&self) -> bool {
        (**self).feature_determined()
    }
}

/// Node efficiency for a task in MB/s: block size over predicted time.
pub fn efficiency(model: &dyn ExecTimeModel, node: &NodeSpec, task: &TaskSpec) -> Result<f64, PredictorError> {
    let t = model.predict(node, task)?;
    Ok(task.size_mb / t)
}

/// Dense task-major matrix of predicted times, `get(task, node)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeMatrix {
    tasks: usize,
    nodes: usize,
    data: Vec<f64>,
}

impl TimeMatrix {
    pub fn from_fn(tasks: usize, nodes: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(tasks * nodes);
        for j in 0..tasks {
            for i in 0..nodes {
                data.push(f(j, i));
            }
        }
        TimeMatrix { tasks, nodes, data }
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn get(&self, task: usize, node: usize) -> f64 {
        self.data[task * self.nodes + node]
    }

    pub fn row(&self, task: usize) -> &[f64] {
        &self.data[task * self.nodes..(task + 1) * self.nodes]
    }

    /// Mean prediction for one node over all tasks.
    pub fn node_mean(&self, node: usize) -> f64 {
        if self.tasks == 0 {
            return 0.0;
        }
        (0..self.tasks).map(|j| self.get(j, node)).sum::<f64>() / self.tasks as f64
    }
}

/// Predicts every (task, node) pair. For feature-determined models identical
/// inputs are evaluated once, which matters for the kernel model on large
/// uniform workloads.
pub fn predict_matrix(model: &dyn ExecTimeModel, nodes: &[NodeSpec], tasks: &[TaskSpec]) -> Result<TimeMatrix, PredictorError> {
    let cached = model.feature_determined();
    let mut cache: HashMap<[u64; FEATURES + 2], f64> = HashMap::new();
    let mut data = Vec::with_capacity(tasks.len() * nodes.len());
    for task in tasks {
        for node in nodes {
            let x = features(node, task);
            let mut key = [0u64; FEATURES + 2];
            for (k, v) in key.iter_mut().zip(x) {
                *k = v.to_bits();
            }
            key[FEATURES] = task.resource_demand.to_bits();
            key[FEATURES + 1] = task.compute_cycles.to_bits();
            let t = match cache.get(&key) {
                Some(&t) if cached => t,
                _ => {
                    let t = model.predict(node, task)?;
                    cache.insert(key, t);
                    t
                }
            };
            data.push(t);
        }
    }
    Ok(TimeMatrix { tasks: tasks.len(), nodes: nodes.len(), data })
}

pub(crate) fn clamp_prediction(t: f64) -> Result<f64, PredictorError> {
    if t.is_finite() {
        Ok(t.max(PREDICTION_FLOOR_S))
    } else {
        Err(PredictorError::NonFinite)
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn efficiency_examples() {
        let n = node(2.0, 8.0, 100.0);
        assert_eq!(efficiency(&Fixed(2.0), &n, &task(64.0, 0.5)).unwrap(), 32.0);
        assert_eq!(efficiency(&Fixed(1.0), &n, &task(1.0, 0.5)).unwrap(), 1.0);
        let e1 = efficiency(&Fixed(1.5), &n, &task(48.0, 0.5)).unwrap();
        let e2 = efficiency(&Fixed(3.0), &n, &task(48.0, 0.5)).unwrap();
        assert_eq!(e1, 2.0 * e2);
    }

    #[test]
    fn matrix_matches_direct_predictions() {
        let nodes = [node(2.0, 8.0, 100.0), node(1.0, 4.0, 50.0)];
        let tasks = [task(64.0, 0.5), task(32.0, 0.5), task(64.0, 0.5)];
        let truth = crate::truth::GroundTruth::noiseless();
        let m = predict_matrix(&truth, &nodes, &tasks).unwrap();
        for (j, t) in tasks.iter().enumerate() {
            for (i, n) in nodes.iter().enumerate() {
                assert_eq!(m.get(j, i), truth.predict(n, t).unwrap());
            }
        }
        assert_eq!(m.row(1).len(), 2);
    }

    #[test]
    fn record_validation() {
        assert!(ExecRecord { features: [1.0, 2.0, 3.0, 4.0], observed_time_s: 0.5 }.is_valid());
        assert!(!ExecRecord { features: [1.0, -2.0, 3.0, 4.0], observed_time_s: 0.5 }.is_valid());
        assert!(!ExecRecord { features: [1.0, 2.0, 3.0, 4.0], observed_time_s: 0.0 }.is_valid());
    }
}
