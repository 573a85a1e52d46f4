//! Comparison schedulers.
//!
//! RF-FD is emulated as reservation first-fit: nodes are tried in id order
//! and accept a task while their predicted load stays inside a reservation
//! window; when nothing fits, the window grows by 10% and the task is
//! retried. RSYNC assigns sequentially with primary-replica affinity and
//! pays a synchronization delay for every non-local task.

use super::{Schedule, SchedError, SchedulerKind};
use crate::cluster::{ClusterGraph, NodeId};
use crate::placement::PlacementPlan;
use crate::predictor::TimeMatrix;
use crate::workload::TaskSpec;

pub const DEFAULT_SYNC_DELAY_S: f64 = 0.5;

const WINDOW_GROWTH: f64 = 1.1;

fn fits(used: f64, demand: f64, cap: Option<f64>) -> bool {
    cap.is_none_or(|c| used + demand <= c * (1.0 + 1e-12))
}

/// Reservation first-fit over regression predictions `times`.
pub fn baseline_rf_fd(g: &ClusterGraph, tasks: &[TaskSpec], times: &TimeMatrix) -> Result<Schedule, SchedError> {
    let n = g.len();
    if times.tasks() != tasks.len() || times.nodes() != n {
        return Err(SchedError::Shape("time matrix does not match tasks and nodes".into()));
    }
    let nodes = g.nodes();
    let slots: Vec<f64> = nodes.iter().map(|n| f64::from(n.slots.max(1))).collect();
    let total_slots: f64 = slots.iter().sum();
    let mean_work: f64 = (0..tasks.len()).map(|j| times.row(j).iter().sum::<f64>() / n as f64).sum();
    let mut window = (mean_work / total_slots).max(f64::MIN_POSITIVE);
    let mut load = vec![0.0; n];
    let mut used = vec![0.0; n];
    let mut assignment = Vec::with_capacity(tasks.len());
    for (j, task) in tasks.iter().enumerate() {
        if !(0..n).any(|i| fits(used[i], task.size_mb, nodes[i].capacity_mb)) {
            return Err(SchedError::Capacity(task.id));
        }
        let pick = loop {
            let hit = (0..n).find(|&i| fits(used[i], task.size_mb, nodes[i].capacity_mb) && load[i] + times.get(j, i) / slots[i] <= window * (1.0 + 1e-9));
            match hit {
                Some(i) => break i,
                None => window *= WINDOW_GROWTH,
            }
        };
        load[pick] += times.get(j, pick) / slots[pick];
        used[pick] += task.size_mb;
        assignment.push(NodeId(pick));
    }
    Ok(Schedule::in_order(SchedulerKind::RfFd, n, tasks, assignment, vec![0.0; tasks.len()]))
}

/// Sequential assignment: each task goes to its primary replica while that
/// node is under its fair share of tasks, otherwise to the least-loaded node
/// with `sync_delay_s` added.
pub fn baseline_rsync(g: &ClusterGraph, tasks: &[TaskSpec], plan: &PlacementPlan, sync_delay_s: f64) -> Result<Schedule, SchedError> {
    let n = g.len();
    let nodes = g.nodes();
    let slots: Vec<f64> = nodes.iter().map(|n| f64::from(n.slots.max(1))).collect();
    let total_slots: f64 = slots.iter().sum();
    let share: Vec<f64> = slots.iter().map(|s| (tasks.len() as f64 * s / total_slots).ceil()).collect();
    let mut count = vec![0.0; n];
    let mut used = vec![0.0; n];
    let mut assignment = Vec::with_capacity(tasks.len());
    let mut extra = Vec::with_capacity(tasks.len());
    for task in tasks {
        let p = plan.primary(task.block)?.0;
        let pick = if count[p] < share[p] && fits(used[p], task.size_mb, nodes[p].capacity_mb) {
            p
        } else {
            (0..n)
                .filter(|&i| fits(used[i], task.size_mb, nodes[i].capacity_mb))
                .min_by(|&a, &b| (count[a] / slots[a]).total_cmp(&(count[b] / slots[b])).then(a.cmp(&b)))
                .ok_or(SchedError::Capacity(task.id))?
        };
        count[pick] += 1.0;
        used[pick] += task.size_mb;
        assignment.push(NodeId(pick));
        extra.push(if plan.holds(NodeId(pick), task.block) { 0.0 } else { sync_delay_s });
    }
    Ok(Schedule::in_order(SchedulerKind::Rsync, n, tasks, assignment, extra))
}

/// Task `j` to node `j mod n`.
pub fn baseline_round_robin(g: &ClusterGraph, tasks: &[TaskSpec]) -> Schedule {
    let n = g.len();
    let assignment = (0..tasks.len()).map(|j| NodeId(j % n)).collect();
    Schedule::in_order(SchedulerKind::RoundRobin, n, tasks, assignment, vec![0.0; tasks.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_cluster, ClusterConfig};
    use crate::placement::{place_rack_aware, ClientPolicy};
    use crate::predictor::predict_matrix;
    use crate::sched::Instance;
    use crate::truth::GroundTruth;
    use crate::workload::{Application, TaskId, Workload};

    fn setup(nodes: usize, blocks: usize, rf: u32) -> (ClusterGraph, Workload, TimeMatrix) {
        let g = build_cluster(&ClusterConfig::uniform(1, nodes, 2.0, 100.0, 1000.0)).unwrap();
        let w = Workload::from_apps(vec![Application::new(0, 64.0 * blocks as f64, 64.0, rf)]).unwrap();
        let t = predict_matrix(&GroundTruth::noiseless(), g.nodes(), &w.tasks).unwrap();
        (g, w, t)
    }

    #[test]
    fn single_node_takes_all() {
        let (g, w, t) = setup(1, 5, 1);
        let s = baseline_rf_fd(&g, &w.tasks, &t).unwrap();
        assert!(s.assignment.iter().all(|n| *n == NodeId(0)));
        let plan = place_rack_aware(&g, &w, ClientPolicy::Fixed(NodeId(0))).unwrap();
        let s = baseline_rsync(&g, &w.tasks, &plan, 0.5).unwrap();
        assert!(s.assignment.iter().all(|n| *n == NodeId(0)));
        assert_eq!(baseline_round_robin(&g, &w.tasks).queues[0].len(), 5);
    }

    #[test]
    fn first_fit_fills_first_node_first() {
        let (g, w, t) = setup(2, 4, 1);
        let s = baseline_rf_fd(&g, &w.tasks, &t).unwrap();
        assert_eq!(s.assignment, vec![NodeId(0), NodeId(0), NodeId(1), NodeId(1)]);
        assert_eq!(s.queues[0], vec![TaskId(0), TaskId(1)]);
    }

    #[test]
    fn first_fit_respects_capacity() {
        let mut cfg = ClusterConfig::uniform(1, 2, 2.0, 100.0, 1000.0);
        cfg.nodes[0].capacity_mb = Some(64.0);
        let g = build_cluster(&cfg).unwrap();
        let w = Workload::from_apps(vec![Application::new(0, 256.0, 64.0, 1)]).unwrap();
        let t = predict_matrix(&GroundTruth::noiseless(), g.nodes(), &w.tasks).unwrap();
        let s = baseline_rf_fd(&g, &w.tasks, &t).unwrap();
        assert_eq!(s.queues[0].len(), 1);
        assert_eq!(s.queues[1].len(), 3);
    }

    #[test]
    fn all_local_rsync_matches_rf_fd_on_homogeneous_nodes() {
        let (g, w, t) = setup(2, 6, 2);
        let plan = place_rack_aware(&g, &w, ClientPolicy::PerBlock(3)).unwrap();
        let rs = baseline_rsync(&g, &w.tasks, &plan, 0.5).unwrap();
        let ff = baseline_rf_fd(&g, &w.tasks, &t).unwrap();
        assert!(rs.extra_delay_s.iter().all(|d| *d == 0.0));
        let times: Vec<Vec<f64>> = (0..w.tasks.len()).map(|j| t.row(j).to_vec()).collect();
        let inst = Instance::from_times(&times, None, None).unwrap();
        let span = |s: &Schedule| inst.evaluate(&s.assignment.iter().map(|n| Some(n.0)).collect::<Vec<_>>()).makespan;
        assert_eq!(span(&rs), span(&ff));
    }

    #[test]
    fn non_local_rsync_pays_sync_delay() {
        let (g, w, _) = setup(2, 4, 1);
        let plan = place_rack_aware(&g, &w, ClientPolicy::Fixed(NodeId(0))).unwrap();
        let s = baseline_rsync(&g, &w.tasks, &plan, 0.7).unwrap();
        assert_eq!(s.extra_delay_s, vec![0.0, 0.0, 0.7, 0.7]);
        assert_eq!(s.assignment[2], NodeId(1));
    }

    #[test]
    fn round_robin_alternates() {
        let (g, w, _) = setup(2, 4, 1);
        let s = baseline_round_robin(&g, &w.tasks);
        assert_eq!(s.queues, vec![vec![TaskId(0), TaskId(2)], vec![TaskId(1), TaskId(3)]]);
        assert_eq!(s, baseline_round_robin(&g, &w.tasks));
    }
}
