//! Path-level QoS metrics and the weighted global objective.

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterError, ClusterGraph, NodeId};
use crate::workload::TaskSpec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QosError {
    #[error("edge {0} carries data over zero bandwidth")]
    ZeroBandwidth(usize),
    #[error("node {0} has work but zero capacity")]
    ZeroCapacity(usize),
    #[error("path element {0} has no delay samples")]
    NoSamples(usize),
    #[error("objective weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("objective weight {0} outside [0, 1]")]
    WeightRange(f64),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeUse {
    pub bandwidth_mbps: f64,
    pub base_queue_delay_s: f64,
    pub cost_per_mb: f64,
    pub carried_mb: f64,
    pub delay_samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeUse {
    /// Cycles per second.
    pub capacity: f64,
    pub work_cycles: f64,
    pub cost_per_cycle: f64,
    pub loss_prob: f64,
    pub delay_samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SchedulePath {
    pub edges: Vec<EdgeUse>,
    pub nodes: Vec<NodeUse>,
}

impl SchedulePath {
    /// Path of one task: the links from `source` to `exec` carrying the block,
    /// then the executing node with the task's cycles. Both endpoints count
    /// toward loss; the source does no work.
    pub fn for_task(g: &ClusterGraph, task: &TaskSpec, source: NodeId, exec: NodeId) -> Result<Self, QosError> {
        let route = g.route(source, exec)?;
        let edges = route
            .links
            .iter()
            .map(|&l| {
                let link = g.link(l);
                EdgeUse {
                    bandwidth_mbps: link.bandwidth_mbps,
                    base_queue_delay_s: link.base_queue_delay_s,
                    cost_per_mb: link.cost_per_mb,
                    carried_mb: task.size_mb,
                    delay_samples: Vec::new(),
                }
            })
            .collect();
        let node_use = |id: NodeId, work: f64| -> Result<NodeUse, QosError> {
            let n = g.node(id)?;
            Ok(NodeUse {
                capacity: n.cycle_rate(),
                work_cycles: work,
                cost_per_cycle: n.cost_per_cycle,
                loss_prob: n.loss_prob,
                delay_samples: Vec::new(),
            })
        };
        let mut nodes = Vec::new();
        if source != exec {
            nodes.push(node_use(source, 0.0)?);
        }
        nodes.push(node_use(exec, task.compute_cycles)?);
        Ok(SchedulePath { edges, nodes })
    }

    pub fn concat(mut self, other: SchedulePath) -> SchedulePath {
        self.edges.extend(other.edges);
        self.nodes.extend(other.nodes);
        self
    }
}

/// `Σ_e (d_e / b_e + q_e) + Σ_v w_v / c_v`.
pub fn path_delay(p: &SchedulePath) -> Result<f64, QosError> {
    let mut total = 0.0;
    for (k, e) in p.edges.iter().enumerate() {
        if e.carried_mb > 0.0 && e.bandwidth_mbps <= 0.0 {
            return Err(QosError::ZeroBandwidth(k));
        }
        if e.carried_mb > 0.0 {
            total += e.carried_mb / e.bandwidth_mbps;
        }
        total += e.base_queue_delay_s;
    }
    for (k, v) in p.nodes.iter().enumerate() {
        if v.work_cycles > 0.0 {
            if v.capacity <= 0.0 {
                return Err(QosError::ZeroCapacity(k));
            }
            total += v.work_cycles / v.capacity;
        }
    }
    Ok(total)
}

/// `Σ_e γ_e d_e + Σ_v κ_v w_v`.
pub fn path_cost(p: &SchedulePath) -> f64 {
    p.edges.iter().map(|e| e.cost_per_mb * e.carried_mb).sum::<f64>()
        + p.nodes.iter().map(|v| v.cost_per_cycle * v.work_cycles).sum::<f64>()
}

/// `1 - Π_v (1 - p_v)` under independent per-node loss.
pub fn path_loss(p: &SchedulePath) -> f64 {
    loss_of(p.nodes.iter().map(|v| v.loss_prob))
}

pub fn loss_of(probs: impl IntoIterator<Item = f64>) -> f64 {
    1.0 - probs.into_iter().map(|p| 1.0 - p).product::<f64>()
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Sum over path elements of the population std of their delay samples.
pub fn path_jitter(p: &SchedulePath) -> Result<f64, QosError> {
    let samples = p.edges.iter().map(|e| &e.delay_samples).chain(p.nodes.iter().map(|v| &v.delay_samples));
    let mut total = 0.0;
    for (k, s) in samples.enumerate() {
        if s.is_empty() {
            return Err(QosError::NoSamples(k));
        }
        total += std_dev(s);
    }
    Ok(total)
}

/// Delay, cost/energy and loss of a schedule, raw or normalized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub delay: f64,
    pub cost: f64,
    pub loss: f64,
}

impl Metrics {
    pub fn new(delay: f64, cost: f64, loss: f64) -> Self {
        Metrics { delay, cost, loss }
    }

    fn zip(self, a: Metrics, b: Metrics, f: impl Fn(f64, f64, f64) -> f64) -> Metrics {
        Metrics { delay: f(self.delay, a.delay, b.delay), cost: f(self.cost, a.cost, b.cost), loss: f(self.loss, a.loss, b.loss) }
    }
}

/// Min-max bounds for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: Metrics,
    pub hi: Metrics,
}

impl Normalizer {
    /// Bounds spanning a candidate set.
    pub fn from_candidates(candidates: &[Metrics]) -> Option<Self> {
        let first = *candidates.first()?;
        let (lo, hi) = candidates.iter().fold((first, first), |(lo, hi), m| {
            (lo.zip(*m, *m, |a, b, _| a.min(b)), hi.zip(*m, *m, |a, b, _| a.max(b)))
        });
        Some(Normalizer { lo, hi })
    }

    /// Maps into `[0, 1]`; a degenerate axis maps to 0.
    pub fn normalize(&self, m: &Metrics) -> Metrics {
        m.zip(self.lo, self.hi, |x, lo, hi| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl ObjectiveWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self, QosError> {
        let w = ObjectiveWeights { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    /// Delay 0.5, cost 0.3, loss 0.2.
    pub fn tuned() -> Self {
        ObjectiveWeights { w1: 0.5, w2: 0.3, w3: 0.2 }
    }

    /// A point inside the `[0.2, 0.4]` box.
    pub fn standard() -> Self {
        ObjectiveWeights { w1: 0.4, w2: 0.3, w3: 0.3 }
    }

    pub fn validate(&self) -> Result<(), QosError> {
        for w in [self.w1, self.w2, self.w3] {
            if !(0.0..=1.0).contains(&w) {
                return Err(QosError::WeightRange(w));
            }
        }
        let sum = self.w1 + self.w2 + self.w3;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(QosError::WeightSum(sum));
        }
        Ok(())
    }

    pub fn in_standard_range(&self) -> bool {
        [self.w1, self.w2, self.w3].iter().all(|w| (0.2..=0.4).contains(w))
    }
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self::tuned()
    }
}

/// `J = w1 * delay + w2 * cost + w3 * loss` over normalized metrics.
pub fn objective(normalized: &Metrics, weights: &ObjectiveWeights) -> Result<f64, QosError> {
    weights.validate()?;
    Ok(weights.w1 * normalized.delay + weights.w2 * normalized.cost + weights.w3 * normalized.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edge(mb: f64, bw: f64, q: f64) -> EdgeUse {
        EdgeUse { bandwidth_mbps: bw, base_queue_delay_s: q, carried_mb: mb, ..Default::default() }
    }

    fn node(work: f64, ghz: f64) -> NodeUse {
        NodeUse { capacity: ghz * 1e9, work_cycles: work, ..Default::default() }
    }

    #[test]
    fn delay_examples() {
        let p = SchedulePath { edges: vec![edge(64.0, 32.0, 0.0)], nodes: vec![node(10e9, 5.0)] };
        assert_eq!(path_delay(&p).unwrap(), 4.0);
        assert_eq!(path_delay(&SchedulePath::default()).unwrap(), 0.0);
        let q = SchedulePath { edges: vec![edge(64.0, 32.0, 0.5)], ..p.clone() };
        assert_eq!(path_delay(&q).unwrap() - path_delay(&p).unwrap(), 0.5);
        let bad = SchedulePath { edges: vec![edge(1.0, 0.0, 0.0)], nodes: vec![] };
        assert_eq!(path_delay(&bad), Err(QosError::ZeroBandwidth(0)));
    }

    #[test]
    fn cost_examples() {
        let mut e = edge(64.0, 32.0, 0.0);
        e.cost_per_mb = 0.01;
        let mut v = node(10e9, 5.0);
        v.cost_per_cycle = 1e-10;
        let p = SchedulePath { edges: vec![e.clone()], nodes: vec![v] };
        assert!((path_cost(&p) - 1.64).abs() < 1e-12);
        assert_eq!(path_cost(&SchedulePath { edges: vec![edge(64.0, 1.0, 0.0)], nodes: vec![node(1e9, 1.0)] }), 0.0);
        let mut e2 = e.clone();
        e2.carried_mb *= 2.0;
        let one = SchedulePath { edges: vec![e], nodes: vec![] };
        let two = SchedulePath { edges: vec![e2], nodes: vec![] };
        assert!((path_cost(&two) - 2.0 * path_cost(&one)).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        assert!((loss_of([0.1, 0.2]) - 0.28).abs() < 1e-12);
        assert_eq!(loss_of([0.3, 1.0, 0.0]), 1.0);
        assert_eq!(path_loss(&SchedulePath::default()), 0.0);
    }

    #[test]
    fn jitter_examples() {
        let mut a = node(0.0, 1.0);
        a.delay_samples = vec![2.0, 2.0, 2.0];
        assert_eq!(path_jitter(&SchedulePath { edges: vec![], nodes: vec![a.clone()] }).unwrap(), 0.0);
        a.delay_samples = vec![1.0, 3.0];
        assert_eq!(path_jitter(&SchedulePath { edges: vec![], nodes: vec![a.clone()] }).unwrap(), 1.0);
        let mut e = edge(0.0, 1.0, 0.0);
        e.delay_samples = vec![0.8, 1.2];
        a.delay_samples = vec![0.7, 1.3];
        let p = SchedulePath { edges: vec![e.clone()], nodes: vec![a] };
        assert!((path_jitter(&p).unwrap() - 0.5).abs() < 1e-12);
        e.delay_samples.clear();
        assert_eq!(path_jitter(&SchedulePath { edges: vec![e], nodes: vec![] }), Err(QosError::NoSamples(0)));
    }

    #[test]
    fn objective_examples() {
        let w = ObjectiveWeights::tuned();
        assert!((objective(&Metrics::new(1.0, 1.0, 1.0), &w).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(objective(&Metrics::default(), &w).unwrap(), 0.0);
        assert_eq!(objective(&Metrics::new(1.0, 0.0, 0.0), &w).unwrap(), 0.5);
        assert!(matches!(ObjectiveWeights::new(0.5, 0.3, 0.3), Err(QosError::WeightSum(_))));
        assert!(ObjectiveWeights::standard().in_standard_range());
        assert!(!ObjectiveWeights::tuned().in_standard_range());
    }

    #[test]
    fn normalizer_spans_candidates() {
        let n = Normalizer::from_candidates(&[Metrics::new(1.0, 5.0, 0.1), Metrics::new(3.0, 5.0, 0.3)]).unwrap();
        let m = n.normalize(&Metrics::new(2.0, 5.0, 0.3));
        assert_eq!(m, Metrics::new(0.5, 0.0, 1.0));
    }

    fn arb_path() -> impl Strategy<Value = SchedulePath> {
        let e = (0.0f64..100.0, 1.0f64..200.0, 0.0f64..0.1, 0.0f64..0.1)
            .prop_map(|(mb, bw, q, c)| EdgeUse { carried_mb: mb, bandwidth_mbps: bw, base_queue_delay_s: q, cost_per_mb: c, delay_samples: vec![] });
        let v = (0.0f64..1e10, 0.5f64..4.0, 0.0f64..1e-9, 0.0f64..1.0).prop_map(|(w, ghz, k, p)| NodeUse {
            capacity: ghz * 1e9,
            work_cycles: w,
            cost_per_cycle: k,
            loss_prob: p,
            delay_samples: vec![],
        });
        (proptest::collection::vec(e, 0..6), proptest::collection::vec(v, 0..6)).prop_map(|(edges, nodes)| SchedulePath { edges, nodes })
    }

    proptest! {
        #[test]
        fn loss_order_independent_and_bounded(mut p in arb_path()) {
            let l = path_loss(&p);
            prop_assert!((0.0..=1.0).contains(&l));
            p.nodes.reverse();
            prop_assert!((path_loss(&p) - l).abs() < 1e-12);
        }

        #[test]
        fn delay_and_cost_additive(a in arb_path(), b in arb_path()) {
            let ab = a.clone().concat(b.clone());
            let (da, db, dab) = (path_delay(&a).unwrap(), path_delay(&b).unwrap(), path_delay(&ab).unwrap());
            prop_assert!((dab - (da + db)).abs() <= 1e-12 * dab.max(1.0));
            prop_assert!((path_cost(&ab) - (path_cost(&a) + path_cost(&b))).abs() <= 1e-12 * path_cost(&ab).max(1.0));
        }

        #[test]
        fn objective_monotone(m in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), bump in 0.0f64..0.5, axis in 0usize..3) {
            let w = ObjectiveWeights::tuned();
            let base = Metrics::new(m.0, m.1, m.2);
            let mut up = base;
            match axis { 0 => up.delay += bump, 1 => up.cost += bump, _ => up.loss += bump }
            prop_assert!(objective(&up, &w).unwrap() >= objective(&base, &w).unwrap());
        }
    }
}
