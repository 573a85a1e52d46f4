use serde::{Deserialize, Serialize};

use super::SchedError;
use crate::cluster::{ClusterGraph, NodeId};
use crate::placement::{access_cost, PlacementPlan};
use crate::predictor::TimeMatrix;
use crate::qos::{loss_of, Metrics, Normalizer};
use crate::workload::{TaskId, TaskSpec};

/// Default cap on candidate nodes per task.
pub const L_MAX: usize = 10;

/// Everything the solvers need about one assignment problem, as dense
/// task-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub tasks: usize,
    pub nodes: usize,
    /// Predicted execution time with local data.
    pub exec: Vec<f64>,
    /// Data access cost in seconds, zero when local.
    pub access: Vec<f64>,
    /// Cost units of running the task on the node, transfer included.
    pub cost: Vec<f64>,
    /// Loss probability of the task's path to the node.
    pub loss: Vec<f64>,
    pub local: Vec<bool>,
    pub demand_mb: Vec<f64>,
    /// Data budget per node; `INFINITY` when unbounded.
    pub capacity_mb: Vec<f64>,
    pub slots: Vec<f64>,
    pub task_ids: Vec<TaskId>,
    /// Candidate nodes per task, replica holders first.
    pub candidates: Vec<Vec<usize>>,
    pub bounds: Normalizer,
}

impl Instance {
    /// Bare makespan problem from a `tasks x nodes` time matrix. Every node
    /// is a candidate; cost, loss and access are zero.
    pub fn from_times(times: &[Vec<f64>], capacity_mb: Option<Vec<f64>>, demand_mb: Option<Vec<f64>>) -> Result<Self, SchedError> {
        let tasks = times.len();
        let nodes = times.first().map_or(0, Vec::len);
        if nodes == 0 || times.iter().any(|r| r.len() != nodes) {
            return Err(SchedError::Shape(format!("{tasks} rows with inconsistent or zero node columns")));
        }
        let exec: Vec<f64> = times.iter().flatten().copied().collect();
        if exec.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(SchedError::Shape("times must be positive and finite".into()));
        }
        let capacity_mb = capacity_mb.unwrap_or_else(|| vec![f64::INFINITY; nodes]);
        let demand_mb = demand_mb.unwrap_or_else(|| vec![1.0; tasks]);
        if capacity_mb.len() != nodes || demand_mb.len() != tasks {
            return Err(SchedError::Shape("capacity or demand length mismatch".into()));
        }
        let mut inst = Instance {
            tasks,
            nodes,
            access: vec![0.0; exec.len()],
            cost: vec![0.0; exec.len()],
            loss: vec![0.0; exec.len()],
            local: vec![false; exec.len()],
            exec,
            demand_mb,
            capacity_mb,
            slots: vec![1.0; nodes],
            task_ids: (0..tasks).map(TaskId).collect(),
            candidates: vec![(0..nodes).collect(); tasks],
            bounds: Normalizer { lo: Metrics::default(), hi: Metrics::default() },
        };
        inst.bounds = inst.fixed_bounds();
        Ok(inst)
    }

    /// Problem for `tasks` on `g` under `plan`, with predicted times `times`.
    pub fn build(g: &ClusterGraph, tasks: &[TaskSpec], plan: &PlacementPlan, times: &TimeMatrix, l_max: usize) -> Result<Self, SchedError> {
        let n = g.len();
        let b = tasks.len();
        if times.tasks() != b || times.nodes() != n {
            return Err(SchedError::Shape(format!("time matrix {}x{} for {b} tasks on {n} nodes", times.tasks(), times.nodes())));
        }
        let nodes = g.nodes();
        let mut exec = Vec::with_capacity(b * n);
        let mut access = Vec::with_capacity(b * n);
        let mut cost = Vec::with_capacity(b * n);
        let mut loss = Vec::with_capacity(b * n);
        let mut local = Vec::with_capacity(b * n);
        let mut candidates = Vec::with_capacity(b);
        for (j, task) in tasks.iter().enumerate() {
            let reps = plan.replicas(task.block)?;
            for (i, node) in nodes.iter().enumerate() {
                let id = NodeId(i);
                let a = access_cost(g, plan, task, id)?;
                let is_local = a == 0.0;
                exec.push(times.get(j, i));
                access.push(a);
                local.push(is_local);
                let compute = node.cost_per_cycle * task.compute_cycles;
                if is_local {
                    cost.push(compute);
                    loss.push(node.loss_prob);
                } else {
                    // fetched from the closest replica
                    let mut src = reps[0];
                    let mut best = g.path_bandwidth(id, src)?;
                    for &r in &reps[1..] {
                        let bw = g.path_bandwidth(id, r)?;
                        if bw > best {
                            (src, best) = (r, bw);
                        }
                    }
                    let route = g.route(src, id)?;
                    let transfer: f64 = route.links.iter().map(|l| g.link(*l).cost_per_mb * task.size_mb).sum();
                    cost.push(compute + transfer);
                    loss.push(loss_of([nodes[src.0].loss_prob, node.loss_prob]));
                }
            }
            // replica holders, then the fastest remaining nodes
            let mut cand: Vec<usize> = reps.iter().map(|r| r.0).collect();
            let mut rest: Vec<usize> = (0..n).filter(|i| !cand.contains(i)).collect();
            let row = j * n;
            rest.sort_by(|&x, &y| (exec[row + x] + access[row + x]).total_cmp(&(exec[row + y] + access[row + y])).then(x.cmp(&y)));
            let room = l_max.max(cand.len()).saturating_sub(cand.len());
            cand.extend(rest.into_iter().take(room));
            candidates.push(cand);
        }
        let mut inst = Instance {
            tasks: b,
            nodes: n,
            exec,
            access,
            cost,
            loss,
            local,
            demand_mb: tasks.iter().map(|t| t.size_mb).collect(),
            capacity_mb: nodes.iter().map(|n| n.capacity_mb.unwrap_or(f64::INFINITY)).collect(),
            slots: nodes.iter().map(|n| f64::from(n.slots.max(1))).collect(),
            task_ids: tasks.iter().map(|t| t.id).collect(),
            candidates,
            bounds: Normalizer { lo: Metrics::default(), hi: Metrics::default() },
        };
        inst.bounds = inst.fixed_bounds();
        Ok(inst)
    }

    /// `T_ij`: predicted time plus access cost.
    #[inline]
    pub fn time(&self, task: usize, node: usize) -> f64 {
        let k = task * self.nodes + node;
        self.exec[k] + self.access[k]
    }

    /// Slot-adjusted contribution of `task` to `node`'s load.
    #[inline]
    pub fn load(&self, task: usize, node: usize) -> f64 {
        self.time(task, node) / self.slots[node]
    }

    /// Per-instance bounds for normalizing delay, cost and loss.
    fn fixed_bounds(&self) -> Normalizer {
        let mut lo = Metrics::default();
        let mut hi = Metrics::default();
        let mut lower_work = 0.0;
        let mut longest = 0.0f64;
        let min_slots = self.slots.iter().copied().fold(f64::INFINITY, f64::min);
        for j in 0..self.tasks {
            let row = j * self.nodes;
            let (mut tmin, mut tmax) = (f64::INFINITY, 0.0f64);
            let (mut cmin, mut cmax) = (f64::INFINITY, 0.0f64);
            let (mut lmin, mut lmax) = (f64::INFINITY, 0.0f64);
            for i in 0..self.nodes {
                let t = self.time(j, i);
                tmin = tmin.min(t);
                tmax = tmax.max(t);
                cmin = cmin.min(self.cost[row + i]);
                cmax = cmax.max(self.cost[row + i]);
                lmin = lmin.min(self.loss[row + i]);
                lmax = lmax.max(self.loss[row + i]);
            }
            let best_load = (0..self.nodes).map(|i| self.load(j, i)).fold(f64::INFINITY, f64::min);
            longest = longest.max(best_load);
            lower_work += tmin;
            hi.delay += tmax / min_slots;
            lo.cost += cmin;
            hi.cost += cmax;
            lo.loss += lmin;
            hi.loss += lmax;
        }
        let total_slots: f64 = self.slots.iter().sum();
        lo.delay = longest.max(lower_work / total_slots);
        let b = self.tasks.max(1) as f64;
        lo.loss /= b;
        hi.loss /= b;
        Normalizer { lo, hi }
    }

    /// Makespan, raw metrics and feasibility of a full or partial assignment.
    pub fn evaluate(&self, assignment: &[Option<usize>]) -> Evaluation {
        let mut load = vec![0.0; self.nodes];
        let mut used = vec![0.0; self.nodes];
        let mut cost = 0.0;
        let mut loss = 0.0;
        let mut assigned = 0;
        for (j, a) in assignment.iter().enumerate() {
            if let Some(i) = *a {
                load[i] += self.load(j, i);
                used[i] += self.demand_mb[j];
                cost += self.cost[j * self.nodes + i];
                loss += self.loss[j * self.nodes + i];
                assigned += 1;
            }
        }
        let within = used.iter().zip(&self.capacity_mb).all(|(u, c)| *u <= *c * (1.0 + 1e-12));
        let makespan = load.iter().copied().fold(0.0, f64::max);
        Evaluation {
            makespan,
            metrics: Metrics { delay: makespan, cost, loss: loss / self.tasks.max(1) as f64 },
            feasible: assigned == self.tasks && within,
        }
    }

    /// Fraction of tasks placed on a replica holder.
    pub fn locality(&self, assignment: &[Option<usize>]) -> f64 {
        if self.tasks == 0 {
            return 1.0;
        }
        let local = assignment.iter().enumerate().filter(|(j, a)| a.is_some_and(|i| self.local[j * self.nodes + i])).count();
        local as f64 / self.tasks as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub makespan: f64,
    pub metrics: Metrics,
    pub feasible: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_cluster, ClusterConfig};
    use crate::placement::{place_rack_aware, ClientPolicy};
    use crate::predictor::predict_matrix;
    use crate::truth::GroundTruth;
    use crate::workload::{Application, Workload};

    #[test]
    fn from_times_evaluates_makespan() {
        let inst = Instance::from_times(&[vec![1.0, 2.0], vec![3.0, 1.0], vec![2.0, 2.0]], None, None).unwrap();
        let e = inst.evaluate(&[Some(0), Some(1), Some(0)]);
        assert_eq!(e.makespan, 3.0);
        assert!(e.feasible);
        assert!(!inst.evaluate(&[Some(0), None, Some(0)]).feasible);
        assert!(inst.bounds.lo.delay <= 2.0);
    }

    #[test]
    fn capacity_violation_is_infeasible() {
        let inst = Instance::from_times(&[vec![1.0, 1.0], vec![1.0, 1.0]], Some(vec![1.0, 1.0]), None).unwrap();
        assert!(!inst.evaluate(&[Some(0), Some(0)]).feasible);
        assert!(inst.evaluate(&[Some(0), Some(1)]).feasible);
    }

    #[test]
    fn build_folds_access_cost_into_time() {
        let g = build_cluster(&ClusterConfig::uniform(2, 2, 2.0, 100.0, 1000.0)).unwrap();
        let w = Workload::from_apps(vec![Application::new(0, 128.0, 64.0, 1)]).unwrap();
        let plan = place_rack_aware(&g, &w, ClientPolicy::Fixed(NodeId(0))).unwrap();
        let times = predict_matrix(&GroundTruth::noiseless(), g.nodes(), &w.tasks).unwrap();
        let inst = Instance::build(&g, &w.tasks, &plan, &times, 3).unwrap();
        assert_eq!(inst.time(0, 0), times.get(0, 0));
        assert!((inst.time(0, 1) - times.get(0, 1) - 0.512).abs() < 1e-12);
        assert_eq!(inst.candidates[0][0], 0);
        assert_eq!(inst.candidates[0].len(), 3);
        assert!(inst.local[0] && !inst.local[1]);
        // remote execution pays transfer cost and source loss
        assert!(inst.cost[1] > inst.cost[0]);
    }
}
