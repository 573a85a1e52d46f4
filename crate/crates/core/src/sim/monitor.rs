//! Runtime queue monitoring: remaining-time estimates, the resource quotient,
//! migration conditions, the prefetch gate and source selection.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::cluster::NodeId;

/// Snapshot of one node's queue.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueueState {
    pub node: NodeId,
    /// Block sizes (MB) of queued tasks not yet started, in order.
    pub pending_mb: Vec<f64>,
    /// Running tasks as `(block MB, progress in [0, 1])`.
    pub running: Vec<(f64, f64)>,
    /// Mean `B_j / t_j` over completed tasks, MB/s. `None` before the first
    /// completion.
    pub observed_rate: Option<f64>,
    /// Predictor fallback rate used until a task completes, MB/s.
    pub bootstrap_rate: f64,
    /// Reference per-task service time, s.
    pub reference_time_s: f64,
    pub slots: u32,
    /// Tasks completed and tasks ever queued here.
    pub completed: usize,
    pub total: usize,
}

impl QueueState {
    pub fn r(&self) -> usize {
        self.pending_mb.len()
    }

    pub fn rate(&self) -> f64 {
        self.observed_rate.unwrap_or(self.bootstrap_rate)
    }

    /// Fraction of the queue already finished.
    pub fn completion_fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.completed as f64 / self.total as f64
        }
    }

    /// Adds a completed task to the running mean rate.
    pub fn record_completion(&mut self, size_mb: f64, elapsed_s: f64) {
        let rate = size_mb / elapsed_s.max(f64::MIN_POSITIVE);
        let prior = self.completed as f64;
        self.observed_rate = Some(match self.observed_rate {
            Some(mean) => (mean * prior + rate) / (prior + 1.0),
            None => rate,
        });
        self.completed += 1;
    }
}

/// Remaining work divided by the observed rate:
/// `(sum over running B_k (1 - progress) + sum over pending B_j) / (rate * slots)`.
pub fn remaining_time(q: &QueueState) -> f64 {
    let work: f64 = q.running.iter().map(|(b, p)| b * (1.0 - p.clamp(0.0, 1.0))).sum::<f64>() + q.pending_mb.iter().sum::<f64>();
    if work == 0.0 {
        return 0.0;
    }
    let rate = q.rate() * f64::from(q.slots.max(1));
    if rate > 0.0 {
        work / rate
    } else {
        f64::INFINITY
    }
}

/// Which resource-quotient formula gates migration sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RqForm {
    /// `r * B_k / (scale * V_i)`.
    #[default]
    Scaled,
    /// Queued work over processing rate, `remaining_time`.
    Work,
}

/// Resource quotient of a queue. `B_k` is the current (or next) block.
pub fn resource_quotient(q: &QueueState, form: RqForm, scale: f64) -> f64 {
    match form {
        RqForm::Scaled => {
            let b_k = q.running.first().map(|r| r.0).or_else(|| q.pending_mb.first().copied()).unwrap_or(0.0);
            let denom = scale * q.rate();
            if denom > 0.0 {
                q.r() as f64 * b_k / denom
            } else {
                f64::INFINITY
            }
        }
        RqForm::Work => remaining_time(q),
    }
}

/// Both migration conditions, strict: `R(target) > phi_t` and
/// `R(source) - T(source) > phi_s`.
pub fn should_migrate(target_remaining: f64, source_remaining: f64, predicted_source_time: f64, phi_target: f64, phi_source: f64) -> bool {
    target_remaining > phi_target && source_remaining - predicted_source_time > phi_source
}

/// `lambda = 1 - theta * n / m`, defined for `1 <= theta < floor(m / n)`.
pub fn lambda_gate(m: usize, n: usize, theta: u32) -> Result<f64, SimError> {
    if n == 0 || m == 0 {
        return Err(SimError::Config(format!("lambda gate needs m, n > 0 (m = {m}, n = {n})")));
    }
    let bound = m / n;
    if theta < 1 || theta as usize >= bound {
        return Err(SimError::Config(format!("lambda theta {theta} outside [1, {bound}) for m = {m}, n = {n}")));
    }
    Ok(1.0 - f64::from(theta) * n as f64 / m as f64)
}

/// Gate with a fallback for short queues where no valid theta exists: the
/// smallest valid theta when possible, otherwise 0.5.
pub fn lambda_or_default(m: usize, n: usize, theta: u32) -> f64 {
    lambda_gate(m, n, theta).or_else(|_| lambda_gate(m, n, 1)).unwrap_or(0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlfForm {
    /// `sqrt((phi_i - phi_t)^2 + (T_i - T_t)^2)`.
    #[default]
    Euclidean,
    /// `sqrt(((phi_i - phi_t) / (phi_t + eps))^2 + ((T_i - T_t) / (T_t + eps))^2)`.
    GuardedRatio,
}

pub const PLF_EPS: f64 = 1e-6;

/// Load coordinates of a node for source selection, both in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadPoint {
    /// Normalized prefetch delay or utilization.
    pub phi: f64,
    /// Normalized queue time or connection count.
    pub t: f64,
}

pub fn plf(candidate: LoadPoint, target: LoadPoint, form: PlfForm) -> f64 {
    let (dp, dt) = (candidate.phi - target.phi, candidate.t - target.t);
    match form {
        PlfForm::Euclidean => dp.hypot(dt),
        PlfForm::GuardedRatio => (dp / (target.phi + PLF_EPS)).hypot(dt / (target.t + PLF_EPS)),
    }
}

/// Argmin PLF over replica holders; ties go to the lower node id.
pub fn choose_prefetch_source(target: LoadPoint, candidates: &[(NodeId, LoadPoint)], form: PlfForm) -> Result<NodeId, SimError> {
    candidates
        .iter()
        .map(|(id, p)| (plf(*p, target, form), *id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or(SimError::NoReplica)
}

/// Divides each value by the largest, mapping an all-zero set to zeros.
pub fn normalize_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 && max.is_finite() {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}
