//! Fixtures shared by the benchmarks.

use sccdso_core::cluster::{build_cluster, ClusterConfig, ClusterGraph};
use sccdso_core::placement::{place_heterogeneous_with, PlacementPlan, PREFILTER};
use sccdso_core::predictor::{predict_matrix, ExecRecord, TimeMatrix};
use sccdso_core::sched::{schedule_scc_dso, AcoConfig, Schedule};
use sccdso_core::truth::GroundTruth;
use sccdso_core::workload::{generate_workload, Workload, WorkloadProfile};

pub struct Fixture {
    pub g: ClusterGraph,
    pub workload: Workload,
    pub times: TimeMatrix,
    pub plan: PlacementPlan,
    pub schedule: Schedule,
    pub history: Vec<ExecRecord>,
}

/// `nodes`-node heterogeneous cluster with four 64 MB blocks per node at RF 2.
pub fn fixture(nodes: usize, seed: u64) -> Fixture {
    let g = build_cluster(&ClusterConfig::heterogeneous(nodes)).expect("built-in cluster");
    let profile = WorkloadProfile::uniform_apps(1, (nodes * 4) as f64 * 64.0, 64.0, 2);
    let workload = generate_workload(seed, &profile).expect("workload");
    let times = predict_matrix(&GroundTruth::noiseless(), g.nodes(), &workload.tasks).expect("times");
    let plan = place_heterogeneous_with(&g, &workload, &times, PREFILTER).expect("placement");
    let (schedule, _) = schedule_scc_dso(&g, &workload.tasks, &plan, &times, &AcoConfig::tuned(), seed).expect("schedule");
    let history = GroundTruth::default().with_seed(seed).history(&g, 200, seed);
    Fixture { g, workload, times, plan, schedule, history }
}
