//! Replica placement, data access cost and the disjoint pre-allocation queues.

use std::cmp::Ordering;
use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterError, ClusterGraph, NodeId};
use crate::predictor::{predict_matrix, ExecTimeModel, PredictorError, TimeMatrix};
use crate::seed;
use crate::workload::{BlockId, TaskId, TaskSpec, Workload};

/// Default prefilter on max-normalized node efficiency.
pub const PREFILTER: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum PlacementError {
    #[error("block {0} has no replicas")]
    UnplacedBlock(BlockId),
    #[error("replication factor {rf} needs at least two racks")]
    SingleRack { rf: u32 },
    #[error("replication factor {rf} exceeds {nodes} nodes")]
    ReplicationTooHigh { rf: u32, nodes: usize },
    #[error("every node fell below the efficiency prefilter")]
    AllPrefiltered,
    #[error("cluster can hold {have} of {need} blocks")]
    InsufficientCapacity { need: usize, have: usize },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("plan export: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementStrategy {
    RackAware,
    Heterogeneous,
    Random,
    Manual,
}

/// Replica lists per block. The first entry is the primary replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    replicas: Vec<Vec<NodeId>>,
    nodes: usize,
    pub strategy: PlacementStrategy,
}

impl PlacementPlan {
    pub fn from_replicas(replicas: Vec<Vec<NodeId>>, nodes: usize) -> Self {
        PlacementPlan { replicas, nodes, strategy: PlacementStrategy::Manual }
    }

    pub fn blocks(&self) -> usize {
        self.replicas.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn replicas(&self, block: BlockId) -> Result<&[NodeId], PlacementError> {
        match self.replicas.get(block.0) {
            Some(r) if !r.is_empty() => Ok(r),
            _ => Err(PlacementError::UnplacedBlock(block)),
        }
    }

    pub fn primary(&self, block: BlockId) -> Result<NodeId, PlacementError> {
        Ok(self.replicas(block)?[0])
    }

    pub fn holds(&self, node: NodeId, block: BlockId) -> bool {
        self.replicas.get(block.0).is_some_and(|r| r.contains(&node))
    }

    /// f(i) counting every replica.
    pub fn replica_counts(&self) -> Vec<usize> {
        let mut f = vec![0; self.nodes];
        for r in &self.replicas {
            for n in r {
                f[n.0] += 1;
            }
        }
        f
    }

    /// f(i) counting primaries only.
    pub fn primary_counts(&self) -> Vec<usize> {
        let mut f = vec![0; self.nodes];
        for r in self.replicas.iter().filter(|r| !r.is_empty()) {
            f[r[0].0] += 1;
        }
        f
    }

    /// Copy without any replica on `node`; blocks that lose their last
    /// replica become unplaced.
    pub fn without_node(&self, node: NodeId) -> PlacementPlan {
        let replicas = self.replicas.iter().map(|r| r.iter().copied().filter(|&n| n != node).collect()).collect();
        PlacementPlan { replicas, ..self.clone() }
    }

    /// `block_id,replica1,replica2,...` with node names.
    pub fn write_csv<W: Write>(&self, g: &ClusterGraph, out: W) -> Result<(), PlacementError> {
        let width = self.replicas.iter().map(Vec::len).max().unwrap_or(0);
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let err = |e: csv::Error| PlacementError::Export(e.to_string());
        let mut header = vec!["block_id".to_string()];
        header.extend((1..=width).map(|k| format!("replica{k}")));
        w.write_record(&header).map_err(err)?;
        for (b, reps) in self.replicas.iter().enumerate() {
            let mut row = vec![b.to_string()];
            for n in reps {
                row.push(g.node(*n)?.name.clone());
            }
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| PlacementError::Export(e.to_string()))
    }
}

/// Where the uploading client sits for rack-aware placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientPolicy {
    Fixed(NodeId),
    /// One seeded random client per application.
    PerApp(u64),
    /// One seeded random client per block.
    PerBlock(u64),
}

impl ClientPolicy {
    fn client(&self, workload: &Workload, block: BlockId, nodes: usize) -> NodeId {
        let pick = |h: u64| NodeId((seed::splitmix64(h) % nodes as u64) as usize);
        match *self {
            ClientPolicy::Fixed(n) => n,
            ClientPolicy::PerApp(s) => pick(seed::derive(s, &[workload.block(block).app.0 as u64])),
            ClientPolicy::PerBlock(s) => pick(seed::derive(s, &[block.0 as u64, 1])),
        }
    }
}

fn check_replication(g: &ClusterGraph, workload: &Workload) -> Result<(), PlacementError> {
    for app in &workload.apps {
        let rf = app.replication_factor;
        if rf as usize > g.len() {
            return Err(PlacementError::ReplicationTooHigh { rf, nodes: g.len() });
        }
        if rf >= 3 && g.rack_count() < 2 {
            return Err(PlacementError::SingleRack { rf });
        }
    }
    Ok(())
}

/// Lowest current count, then lowest id.
fn least_loaded(candidates: impl Iterator<Item = NodeId>, counts: &[usize]) -> Option<NodeId> {
    candidates.min_by_key(|n| (counts[n.0], n.0))
}

/// Replicas 2..rf for a block whose first replica sits on `first`.
fn follow_tiers(g: &ClusterGraph, first: NodeId, rf: u32, counts: &mut [usize]) -> Vec<NodeId> {
    let mut reps = vec![first];
    let rack = g.nodes()[first.0].rack;
    let all = || g.node_ids();
    for k in 1..rf {
        let unused = |n: &NodeId| !reps.contains(n);
        let pick = match k {
            1 => least_loaded(g.rack_members(rack).iter().copied().filter(unused), counts)
                .or_else(|| least_loaded(all().filter(unused), counts)),
            2 => least_loaded(all().filter(|n| g.nodes()[n.0].rack != rack).filter(unused), counts),
            _ => least_loaded(all().filter(unused), counts),
        };
        // rf was checked against node and rack counts
        let n = pick.expect("replica candidate");
        counts[n.0] += 1;
        reps.push(n);
    }
    reps
}

/// Rack-aware placement: first replica on the client, second on another
/// node of the client's rack, third in a different rack, further replicas
/// anywhere. Ties go to the lowest replica count, then the lowest id.
pub fn place_rack_aware(g: &ClusterGraph, workload: &Workload, client: ClientPolicy) -> Result<PlacementPlan, PlacementError> {
    check_replication(g, workload)?;
    let mut counts = vec![0; g.len()];
    let mut replicas = Vec::with_capacity(workload.blocks.len());
    for block in &workload.blocks {
        let first = client.client(workload, block.id, g.len());
        g.node(first)?;
        counts[first.0] += 1;
        replicas.push(follow_tiers(g, first, workload.replication_of(block.id), &mut counts));
    }
    Ok(PlacementPlan { replicas, nodes: g.len(), strategy: PlacementStrategy::RackAware })
}

/// Each block on `rf` distinct uniformly random nodes.
pub fn place_random(g: &ClusterGraph, workload: &Workload, seed: u64) -> Result<PlacementPlan, PlacementError> {
    check_replication(g, workload)?;
    let mut rng = seed::rng(seed);
    let replicas = workload
        .blocks
        .iter()
        .map(|b| {
            let rf = workload.replication_of(b.id) as usize;
            index::sample(&mut rng, g.len(), rf).into_iter().map(NodeId).collect()
        })
        .collect();
    Ok(PlacementPlan { replicas, nodes: g.len(), strategy: PlacementStrategy::Random })
}

/// Mean `size / T` per node in MB/s.
pub fn node_efficiency(tasks: &[TaskSpec], times: &TimeMatrix) -> Vec<f64> {
    (0..times.nodes())
        .map(|i| {
            if tasks.is_empty() {
                return 0.0;
            }
            tasks.iter().enumerate().map(|(j, t)| t.size_mb / times.get(j, i)).sum::<f64>() / tasks.len() as f64
        })
        .collect()
}

/// Heterogeneity-aware placement from a predictor.
pub fn place_heterogeneous(g: &ClusterGraph, workload: &Workload, predictor: &dyn ExecTimeModel) -> Result<PlacementPlan, PlacementError> {
    let times = predict_matrix(predictor, g.nodes(), &workload.tasks)?;
    place_heterogeneous_with(g, workload, &times, PREFILTER)
}

/// Primary counts proportional to node efficiency so that predicted per-node
/// totals are equal within rounding; primaries take contiguous block ranges
/// in node order and the remaining replicas follow the rack tiers.
pub fn place_heterogeneous_with(
    g: &ClusterGraph,
    workload: &Workload,
    times: &TimeMatrix,
    prefilter: f64,
) -> Result<PlacementPlan, PlacementError> {
    check_replication(g, workload)?;
    let b = workload.blocks.len();
    let eff = node_efficiency(&workload.tasks, times);
    let max_eff = eff.iter().copied().fold(0.0, f64::max);
    let eligible: Vec<bool> = eff.iter().map(|&e| max_eff > 0.0 && e / max_eff >= prefilter).collect();
    if !eligible.iter().any(|&e| e) {
        return Err(PlacementError::AllPrefiltered);
    }
    let nodes = g.nodes();
    let mean_size = workload.total_mb() / b.max(1) as f64;
    let cap: Vec<usize> = nodes
        .iter()
        .zip(&eligible)
        .map(|(n, &ok)| match (ok, n.capacity_mb) {
            (false, _) => 0,
            (true, Some(c)) => (c / mean_size).floor() as usize,
            (true, None) => usize::MAX,
        })
        .collect();
    let have = cap.iter().fold(0usize, |a, &c| a.saturating_add(c));
    if have < b {
        return Err(PlacementError::InsufficientCapacity { need: b, have });
    }
    // per-block cost on node i, slot-adjusted
    let unit: Vec<f64> = (0..g.len()).map(|i| times.node_mean(i) / f64::from(nodes[i].slots.max(1))).collect();
    let weights: Vec<f64> = (0..g.len()).map(|i| if cap[i] > 0 { 1.0 / unit[i] } else { 0.0 }).collect();
    let f = balance_counts(b, &weights, &unit, &cap);

    let mut counts = f.clone();
    let mut replicas = Vec::with_capacity(b);
    let mut next = 0;
    for (i, &fi) in f.iter().enumerate() {
        for block in &workload.blocks[next..next + fi] {
            let rf = workload.replication_of(block.id);
            replicas.push(follow_tiers(g, NodeId(i), rf, &mut counts));
        }
        next += fi;
    }
    Ok(PlacementPlan { replicas, nodes: g.len(), strategy: PlacementStrategy::Heterogeneous })
}

/// Largest-remainder apportionment of `b` items by `weights`, then up to `b`
/// single-item moves off the most loaded node while they lower
/// `(max load, nodes at max)`. Load is `f[i] * unit[i]`.
pub fn balance_counts(b: usize, weights: &[f64], unit: &[f64], cap: &[usize]) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let quota: Vec<f64> = weights.iter().map(|w| b as f64 * w / total).collect();
    let mut f: Vec<usize> = quota.iter().zip(cap).map(|(q, &c)| (q.floor() as usize).min(c)).collect();
    let mut order: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quota[a] - quota[a].floor(), quota[b] - quota[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = b - f.iter().sum::<usize>();
    // remainders first, then anything with room in order of resulting load
    for &i in &order {
        if left == 0 {
            break;
        }
        if f[i] < cap[i] {
            f[i] += 1;
            left -= 1;
        }
    }
    while left > 0 {
        let i = (0..n)
            .filter(|&i| weights[i] > 0.0 && f[i] < cap[i])
            .min_by(|&a, &b| ((f[a] + 1) as f64 * unit[a]).total_cmp(&((f[b] + 1) as f64 * unit[b])).then(a.cmp(&b)))
            .expect("capacity was checked");
        f[i] += 1;
        left -= 1;
    }

    let load = |f: &[usize], i: usize| f[i] as f64 * unit[i];
    for _ in 0..b {
        let max = (0..n).filter(|&i| f[i] > 0).map(|i| load(&f, i)).fold(0.0, f64::max);
        let tol = 1e-12 * max.max(1.0);
        let Some(donor) = (0..n).filter(|&i| f[i] > 0 && load(&f, i) >= max - tol).max_by_key(|&i| i) else { break };
        let receiver = (0..n)
            .filter(|&i| i != donor && weights[i] > 0.0 && f[i] < cap[i])
            .min_by(|&a, &b| ((f[a] + 1) as f64 * unit[a]).total_cmp(&((f[b] + 1) as f64 * unit[b])).then(a.cmp(&b)));
        match receiver {
            Some(r) if (f[r] + 1) as f64 * unit[r] < max - tol => {
                f[donor] -= 1;
                f[r] += 1;
            }
            _ => break,
        }
    }
    f
}

/// Seconds to bring `task`'s block to `node`: zero when local, otherwise the
/// best replica's `size / path bandwidth`.
pub fn access_cost(g: &ClusterGraph, plan: &PlacementPlan, task: &TaskSpec, node: NodeId) -> Result<f64, PlacementError> {
    let reps = plan.replicas(task.block)?;
    if reps.contains(&node) {
        return Ok(0.0);
    }
    let mut best = f64::INFINITY;
    for &r in reps {
        best = best.min(task.size_mb / g.path_bandwidth(node, r)?);
    }
    Ok(best)
}

/// Fraction of tasks whose assigned node holds a replica.
pub fn locality_ratio(plan: &PlacementPlan, tasks: &[TaskSpec], assignment: &[NodeId]) -> f64 {
    if tasks.is_empty() {
        return 1.0;
    }
    let local = tasks.iter().zip(assignment).filter(|(t, &n)| plan.holds(n, t.block)).count();
    local as f64 / tasks.len() as f64
}

/// Per-node queues for an assignment: local tasks first, then by descending
/// `Eff = 1 / (T + access)`, ties by task id.
pub fn order_queues(
    g: &ClusterGraph,
    plan: &PlacementPlan,
    tasks: &[TaskSpec],
    assignment: &[NodeId],
    times: &TimeMatrix,
) -> Result<Vec<Vec<TaskId>>, PlacementError> {
    let mut keyed: Vec<Vec<(bool, f64, TaskId)>> = vec![Vec::new(); g.len()];
    for (j, (task, &node)) in tasks.iter().zip(assignment).enumerate() {
        let access = access_cost(g, plan, task, node)?;
        let eff = 1.0 / (times.get(j, node.0) + access);
        keyed[node.0].push((access == 0.0, eff, task.id));
    }
    Ok(keyed
        .into_iter()
        .map(|mut q| {
            q.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal)).then(a.2.cmp(&b.2)));
            q.into_iter().map(|(_, _, id)| id).collect()
        })
        .collect())
}

/// Disjoint pre-allocation: every task queued on its primary replica node.
pub fn optimize_queues(
    g: &ClusterGraph,
    plan: &PlacementPlan,
    tasks: &[TaskSpec],
    times: &TimeMatrix,
) -> Result<Vec<Vec<TaskId>>, PlacementError> {
    let assignment = tasks.iter().map(|t| plan.primary(t.block)).collect::<Result<Vec<_>, _>>()?;
    order_queues(g, plan, tasks, &assignment, times)
}
