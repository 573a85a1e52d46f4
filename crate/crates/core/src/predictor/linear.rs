use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_prediction, features, ExecRecord, ExecTimeModel, PredictorError, FEATURES};
use crate::cluster::NodeSpec;
use crate::workload::TaskSpec;

/// Lightweight predictor `T = a * v + b` over the task's normalized demand.
/// Node features are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
    /// Std of the additive noise used only when sampling ground truth.
    pub noise_std: f64,
}

impl Default for LinearModel {
    fn default() -> Self {
        LinearModel { slope: 0.5, intercept: 0.1, noise_std: 0.1 }
    }
}

impl LinearModel {
    pub fn new(slope: f64, intercept: f64, noise_std: f64) -> Result<Self, PredictorError> {
        // positive on all of (0, 1]
        if intercept < 0.0 || slope + intercept <= 0.0 || noise_std < 0.0 {
            return Err(PredictorError::InvalidParameter(format!("linear model a={slope} b={intercept}")));
        }
        Ok(LinearModel { slope, intercept, noise_std })
    }

    /// Noiseless prediction.
    pub fn predict_demand(&self, demand: f64) -> f64 {
        self.slope * demand + self.intercept
    }

    /// Prediction plus one draw of the Gaussian residual.
    pub fn sample<R: Rng + ?Sized>(&self, demand: f64, rng: &mut R) -> f64 {
        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        self.predict_demand(demand) + self.noise_std * z
    }
}

impl ExecTimeModel for LinearModel {
    fn predict(&self, _node: &NodeSpec, task: &TaskSpec) -> Result<f64, PredictorError> {
        clamp_prediction(self.predict_demand(task.resource_demand))
    }

    fn feature_determined(&self) -> bool {
        true
    }
}

/// Ordinary least squares on `[1, m, cpu, mem, io]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegression {
    pub weights: [f64; FEATURES + 1],
}

impl LinearRegression {
    pub fn fit(records: &[ExecRecord]) -> Result<Self, PredictorError> {
        const P: usize = FEATURES + 1;
        if records.len() < P {
            return Err(PredictorError::TooFewRecords { need: P, got: records.len() });
        }
        if let Some(bad) = records.iter().position(|r| !r.is_valid()) {
            return Err(PredictorError::InvalidRecord(bad));
        }
        let mut xtx = [[0.0; P]; P];
        let mut xty = [0.0; P];
        for r in records {
            let row = design_row(&r.features);
            for i in 0..P {
                xty[i] += row[i] * r.observed_time_s;
                for j in 0..P {
                    xtx[i][j] += row[i] * row[j];
                }
            }
        }
        // small ridge keeps constant columns (e.g. a homogeneous cluster) solvable
        let trace: f64 = (0..P).map(|i| xtx[i][i]).sum();
        for (i, row) in xtx.iter_mut().enumerate() {
            row[i] += 1e-9 * trace.max(1.0);
        }
        let weights = solve(xtx, xty).ok_or_else(|| PredictorError::InvalidParameter("singular design".into()))?;
        Ok(LinearRegression { weights })
    }

    pub fn predict_features(&self, x: &[f64; FEATURES]) -> f64 {
        design_row(x).iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
}

impl ExecTimeModel for LinearRegression {
    fn predict(&self, node: &NodeSpec, task: &TaskSpec) -> Result<f64, PredictorError> {
        clamp_prediction(self.predict_features(&features(node, task)))
    }

    fn feature_determined(&self) -> bool {
        true
    }
}

fn design_row(x: &[f64; FEATURES]) -> [f64; FEATURES + 1] {
    let mut row = [1.0; FEATURES + 1];
    row[1..].copy_from_slice(x);
    row
}

/// Gaussian elimination with partial pivoting.
fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> Option<[f64; P]> {
    for col in 0..P {
        let pivot = (col..P).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..P {
            let f = a[row][col] / a[col][col];
            for k in col..P {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; P];
    for row in (0..P).rev() {
        let tail: f64 = (row + 1..P).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}
