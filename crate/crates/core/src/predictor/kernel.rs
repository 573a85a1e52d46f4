use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_prediction, features, ExecRecord, ExecTimeModel, Features, PredictorError, FEATURES};
use crate::cluster::NodeSpec;
use crate::seed;
use crate::workload::TaskSpec;

/// Support-set cap; larger training sets are reservoir-sampled down to this.
pub const MAX_SUPPORT: usize = 512;

/// Per-feature standardization applied before kernel evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Features,
    pub std: Features,
}

impl FeatureScaler {
    pub fn fit(rows: &[Features]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; FEATURES];
        let mut std = [0.0; FEATURES];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x / n;
            }
        }
        for row in rows {
            for k in 0..FEATURES {
                std[k] += (row[k] - mean[k]).powi(2) / n;
            }
        }
        for s in &mut std {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        FeatureScaler { mean, std }
    }

    pub fn transform(&self, x: &Features) -> Features {
        std::array::from_fn(|k| (x[k] - self.mean[k]) / self.std[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFitConfig {
    pub bandwidth: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub max_support: usize,
    /// Seed for reservoir sampling of the support set.
    pub seed: u64,
}

impl Default for KernelFitConfig {
    fn default() -> Self {
        KernelFitConfig { bandwidth: 1.0, learning_rate: 0.05, epochs: 400, max_support: MAX_SUPPORT, seed: 0 }
    }
}

/// `T(x) = sum_s w_s K(x, x_s) + b` with a Gaussian RBF kernel on
/// standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub support: Vec<Features>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub bandwidth: f64,
    pub learning_rate: f64,
    pub scaler: FeatureScaler,
    /// Set when the training features were all identical and the model
    /// degenerated to a bias.
    pub degenerate: bool,
    /// Training loss after each epoch.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history: Vec<f64>,
}

/// Gaussian RBF kernel `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn rbf(x: &Features, y: &Features, bandwidth: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (-d2 / (2.0 * bandwidth * bandwidth)).exp()
}

pub fn fit_kernel(records: &[ExecRecord], bandwidth: f64, learning_rate: f64, epochs: usize) -> Result<KernelModel, PredictorError> {
    fit_kernel_with(records, &KernelFitConfig { bandwidth, learning_rate, epochs, ..KernelFitConfig::default() })
}

/// Full-batch gradient descent on mean squared error over the coefficients
/// and bias. Steps that would raise the training loss are halved until they
/// do not, so the recorded loss is non-increasing.
pub fn fit_kernel_with(records: &[ExecRecord], cfg: &KernelFitConfig) -> Result<KernelModel, PredictorError> {
    if records.len() < 2 {
        return Err(PredictorError::TooFewRecords { need: 2, got: records.len() });
    }
    if let Some(bad) = records.iter().position(|r| !r.is_valid()) {
        return Err(PredictorError::InvalidRecord(bad));
    }
    if !(cfg.bandwidth > 0.0) {
        return Err(PredictorError::InvalidParameter(format!("bandwidth {}", cfg.bandwidth)));
    }
    if !(0.01..=0.1).contains(&cfg.learning_rate) {
        return Err(PredictorError::InvalidParameter(format!("learning rate {} outside [0.01, 0.1]", cfg.learning_rate)));
    }
    if cfg.max_support == 0 {
        return Err(PredictorError::InvalidParameter("max_support 0".into()));
    }

    let raw: Vec<Features> = records.iter().map(|r| r.features).collect();
    let targets: Vec<f64> = records.iter().map(|r| r.observed_time_s).collect();
    let scaler = FeatureScaler::fit(&raw);
    let mean_t = targets.iter().sum::<f64>() / targets.len() as f64;

    if raw.iter().all(|x| x == &raw[0]) {
        log::warn!("kernel fit: all {} training records share one feature vector; using bias-only model", raw.len());
        return Ok(KernelModel {
            support: Vec::new(),
            coefficients: Vec::new(),
            bias: mean_t,
            bandwidth: cfg.bandwidth,
            learning_rate: cfg.learning_rate,
            scaler,
            degenerate: true,
            loss_history: Vec::new(),
        });
    }

    let scaled: Vec<Features> = raw.iter().map(|x| scaler.transform(x)).collect();
    let support_idx = reservoir(scaled.len(), cfg.max_support, cfg.seed);
    let support: Vec<Features> = support_idx.iter().map(|&i| scaled[i]).collect();

    let mut model = KernelModel {
        coefficients: vec![0.0; support.len()],
        support,
        bias: mean_t,
        bandwidth: cfg.bandwidth,
        learning_rate: cfg.learning_rate,
        scaler,
        degenerate: false,
        loss_history: Vec::with_capacity(cfg.epochs),
    };

    // Gram block between training rows and support points.
    let gram: Vec<Vec<f64>> = scaled
        .iter()
        .map(|x| model.support.iter().map(|s| rbf(x, s, cfg.bandwidth)).collect())
        .collect();

    let mut loss = loss_from_gram(&gram, &model.coefficients, model.bias, &targets);
    let mut step = cfg.learning_rate;
    for _ in 0..cfg.epochs {
        let (_, gw, gb) = loss_grad_from_gram(&gram, &model.coefficients, model.bias, &targets);
        let mut accepted = false;
        for _ in 0..30 {
            let w: Vec<f64> = model.coefficients.iter().zip(&gw).map(|(w, g)| w - step * g).collect();
            let b = model.bias - step * gb;
            let next = loss_from_gram(&gram, &w, b, &targets);
            if next <= loss {
                model.coefficients = w;
                model.bias = b;
                loss = next;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        model.loss_history.push(loss);
        if !accepted {
            break;
        }
    }
    Ok(model)
}

/// Uniform sample of `k` indices out of `n` (algorithm R), returned sorted.
fn reservoir(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut rng = seed::rng(seed::derive(seed, &[seed::label("reservoir")]));
    let mut out: Vec<usize> = (0..k).collect();
    for i in k..n {
        let j = rng.random_range(0..=i);
        if j < k {
            out[j] = i;
        }
    }
    out.sort_unstable();
    out
}

fn loss_from_gram(gram: &[Vec<f64>], w: &[f64], b: f64, targets: &[f64]) -> f64 {
    let n = targets.len() as f64;
    gram.iter()
        .zip(targets)
        .map(|(row, t)| {
            let f: f64 = row.iter().zip(w).map(|(k, w)| k * w).sum::<f64>() + b;
            0.5 * (f - t).powi(2)
        })
        .sum::<f64>()
        / n
}

fn loss_grad_from_gram(gram: &[Vec<f64>], w: &[f64], b: f64, targets: &[f64]) -> (f64, Vec<f64>, f64) {
    let n = targets.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    let mut loss = 0.0;
    for (row, t) in gram.iter().zip(targets) {
        let r = row.iter().zip(w).map(|(k, w)| k * w).sum::<f64>() + b - t;
        loss += 0.5 * r * r / n;
        gb += r / n;
        for (g, k) in gw.iter_mut().zip(row) {
            *g += r * k / n;
        }
    }
    (loss, gw, gb)
}

impl KernelModel {
    /// Raw (unclamped) model output at raw features, plus the number of
    /// kernel evaluations it took.
    pub fn evaluate(&self, x: &Features) -> (f64, usize) {
        let z = self.scaler.transform(x);
        let mut evals = 0;
        let mut acc = self.bias;
        for (s, w) in self.support.iter().zip(&self.coefficients) {
            acc += w * rbf(&z, s, self.bandwidth);
            evals += 1;
        }
        (acc, evals)
    }

    pub fn predict_features(&self, x: &Features) -> Result<f64, PredictorError> {
        if self.coefficients.len() != self.support.len() || (self.support.is_empty() && !self.degenerate) {
            return Err(PredictorError::Unfitted);
        }
        clamp_prediction(self.evaluate(x).0)
    }

    /// Mean squared-error loss and its gradient with respect to the
    /// coefficients and bias, over records given in raw feature space.
    pub fn loss_and_gradient(&self, records: &[ExecRecord]) -> (f64, Vec<f64>, f64) {
        let gram: Vec<Vec<f64>> = records
            .iter()
            .map(|r| {
                let z = self.scaler.transform(&r.features);
                self.support.iter().map(|s| rbf(&z, s, self.bandwidth)).collect()
            })
            .collect();
        let targets: Vec<f64> = records.iter().map(|r| r.observed_time_s).collect();
        loss_grad_from_gram(&gram, &self.coefficients, self.bias, &targets)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        let m: KernelModel = serde_json::from_str(text).map_err(|e| PredictorError::Serde(e.to_string()))?;
        if m.coefficients.len() != m.support.len() || !(m.bandwidth > 0.0) {
            return Err(PredictorError::Serde("inconsistent kernel model".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        std::fs::write(path, self.to_json()).map_err(|e| PredictorError::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        let text = std::fs::read_to_string(path).map_err(|e| PredictorError::Serde(e.to_string()))?;
        Self::from_json(&text)
    }
}

impl ExecTimeModel for KernelModel {
    fn predict(&self, node: &NodeSpec, task: &TaskSpec) -> Result<f64, PredictorError> {
        self.predict_features(&features(node, task))
    }

    fn feature_determined(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn synthetic(n: usize, seed: u64, noise: f64) -> Vec<ExecRecord> {
        // t = 0.5 m / io with a handful of node classes
        let classes = [(3.0, 64.0), (3.6, 32.0), (2.5, 16.0), (1.2, 4.0)];
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| {
                let m = rng.random_range(1.0..64.0);
                let io = rng.random_range(50.0..500.0);
                let (cpu, mem) = classes[rng.random_range(0..classes.len())];
                let t: f64 = 0.5 * m / io + noise * seed::normal(rng.random());
                ExecRecord { features: [m, cpu, mem, io], observed_time_s: t.max(1e-3) }
            })
            .collect()
    }

    #[test]
    fn kernel_of_identical_points_is_one() {
        for sigma in [0.5, 1.0, 2.0, 7.3] {
            assert_eq!(rbf(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], sigma), 1.0);
        }
    }

    #[test]
    fn fit_recovers_generative_function() {
        let train = synthetic(200, 11, 0.05);
        let test = synthetic(200, 12, 0.0);
        let model = fit_kernel(&train, 1.0, 0.05, 400).unwrap();
        let mae = test
            .iter()
            .map(|r| (model.predict_features(&r.features).unwrap() - r.observed_time_s).abs())
            .sum::<f64>()
            / test.len() as f64;
        assert!(mae <= 0.10, "held-out MAE {mae}");
    }

    #[test]
    fn training_loss_non_increasing() {
        let model = fit_kernel(&synthetic(120, 3, 0.05), 1.0, 0.05, 200).unwrap();
        assert!(!model.loss_history.is_empty());
        for w in model.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn repeated_record_predicts_its_target() {
        let rec = ExecRecord { features: [64.0, 2.0, 8.0, 100.0], observed_time_s: 1.7 };
        let model = fit_kernel(&[rec.clone(), rec.clone(), rec.clone()], 1.0, 0.05, 50).unwrap();
        assert!(model.degenerate);
        assert!((model.predict_features(&rec.features).unwrap() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let one = synthetic(1, 0, 0.0);
        assert!(matches!(fit_kernel(&one, 1.0, 0.05, 10), Err(PredictorError::TooFewRecords { .. })));
        let two = synthetic(2, 0, 0.0);
        assert!(fit_kernel(&two, 0.0, 0.05, 10).is_err());
        assert!(fit_kernel(&two, 1.0, 0.5, 10).is_err());
        let mut bad = two.clone();
        bad[1].observed_time_s = f64::NAN;
        assert_eq!(fit_kernel(&bad, 1.0, 0.05, 10).unwrap_err(), PredictorError::InvalidRecord(1));
    }

    #[test]
    fn unfitted_model_errors() {
        let m = KernelModel {
            support: vec![],
            coefficients: vec![],
            bias: 0.0,
            bandwidth: 1.0,
            learning_rate: 0.05,
            scaler: FeatureScaler { mean: [0.0; 4], std: [1.0; 4] },
            degenerate: false,
            loss_history: vec![],
        };
        assert_eq!(m.predict(&node(1.0, 1.0, 1.0), &task(1.0, 0.5)), Err(PredictorError::Unfitted));
    }

    #[test]
    fn faster_cpu_predicts_lower_time() {
        // generative family where compute dominates
        let mut rng = seed::rng(5);
        let records: Vec<ExecRecord> = (0..200)
            .map(|_| {
                let m = rng.random_range(8.0..64.0);
                let cpu = rng.random_range(1.0..4.0);
                let t = m * 2e7 / (cpu * 1e9) + m / 200.0;
                ExecRecord { features: [m, cpu, 16.0, 200.0], observed_time_s: t }
            })
            .collect();
        let model = fit_kernel(&records, 1.0, 0.05, 400).unwrap();
        let t = task(48.0, 0.5);
        let slow = model.predict(&node(1.5, 16.0, 200.0), &t).unwrap();
        let fast = model.predict(&node(3.0, 16.0, 200.0), &t).unwrap();
        assert!(fast < slow, "fast {fast} slow {slow}");
    }

    #[test]
    fn predict_touches_every_support_point() {
        let model = fit_kernel(&synthetic(50, 9, 0.05), 1.0, 0.05, 20).unwrap();
        let (_, evals) = model.evaluate(&[10.0, 2.0, 8.0, 100.0]);
        assert_eq!(evals, model.support.len());
    }

    #[test]
    fn support_is_capped() {
        let cfg = KernelFitConfig { max_support: 64, epochs: 5, ..KernelFitConfig::default() };
        let model = fit_kernel_with(&synthetic(300, 1, 0.05), &cfg).unwrap();
        assert_eq!(model.support.len(), 64);
    }

    #[test]
    fn save_load_round_trip() {
        let model = fit_kernel(&synthetic(40, 2, 0.05), 1.5, 0.05, 30).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = KernelModel::load(&path).unwrap();
        let x = [20.0, 3.0, 32.0, 300.0];
        assert_eq!(back.predict_features(&x).unwrap(), model.predict_features(&x).unwrap());
    }

    proptest! {
        #[test]
        fn kernel_symmetric_and_bounded(x in prop::array::uniform4(-5.0f64..5.0), y in prop::array::uniform4(-5.0f64..5.0), s in 0.5f64..2.0) {
            let kxy = rbf(&x, &y, s);
            prop_assert_eq!(kxy, rbf(&y, &x, s));
            prop_assert!(kxy > 0.0 || x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() > 1400.0 * s * s);
            prop_assert!(kxy <= 1.0);
        }

        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..1000, s in 2usize..10) {
            let recs = synthetic(s, seed, 0.05);
            let mut model = fit_kernel(&recs, 1.0, 0.05, 3).unwrap();
            prop_assume!(!model.degenerate);
            let mut rng = seed::rng(seed + 1);
            for w in &mut model.coefficients {
                *w = rng.random_range(-1.0..1.0);
            }
            let (_, gw, gb) = model.loss_and_gradient(&recs);
            let h = 1e-6;
            for k in 0..model.coefficients.len() {
                let mut plus = model.clone();
                plus.coefficients[k] += h;
                let mut minus = model.clone();
                minus.coefficients[k] -= h;
                let fd = (plus.loss_and_gradient(&recs).0 - minus.loss_and_gradient(&recs).0) / (2.0 * h);
                let scale = gw[k].abs().max(fd.abs()).max(1e-8);
                prop_assert!((gw[k] - fd).abs() / scale < 1e-5, "w{}: analytic {} fd {}", k, gw[k], fd);
            }
            let mut plus = model.clone();
            plus.bias += h;
            let mut minus = model.clone();
            minus.bias -= h;
            let fd = (plus.loss_and_gradient(&recs).0 - minus.loss_and_gradient(&recs).0) / (2.0 * h);
            prop_assert!((gb - fd).abs() / gb.abs().max(fd.abs()).max(1e-8) < 1e-5);
        }
    }
}
