use std::collections::{HashMap, VecDeque};

use super::monitor::{
    choose_prefetch_source, lambda_or_default, normalize_max, remaining_time, resource_quotient, should_migrate, LoadPoint, QueueState,
};
use super::policy::{epsilon_greedy_migration, Candidate, MigrationCap, QTable, State};
use super::{EventKind, RuntimeConfig, SimError, SimEvent, SimMetrics, SimTrace, TaskRecord};
use crate::cluster::{ClusterGraph, NodeId};
use crate::placement::PlacementPlan;
use crate::predictor::TimeMatrix;
use crate::sched::Schedule;
use crate::seed::{self, SimRng};
use crate::truth::GroundTruth;
use crate::workload::{TaskId, TaskSpec};

const EPS_T: f64 = 1e-9;

/// Node `node` stops at `at_s`; its running and queued tasks are requeued on
/// live nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Failure {
    pub node: NodeId,
    pub at_s: f64,
}

/// Runs `schedule` on `g`. `times` are the predictions the runtime uses for
/// bootstrap rates; actual durations come from the ground-truth model with
/// noise keyed by `seed`.
pub fn simulate(
    g: &ClusterGraph,
    plan: &PlacementPlan,
    schedule: &Schedule,
    tasks: &[TaskSpec],
    times: &TimeMatrix,
    cfg: &RuntimeConfig,
    seed: u64,
) -> Result<SimTrace, SimError> {
    simulate_with_failure(g, plan, schedule, tasks, times, cfg, seed, None)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_with_failure(
    g: &ClusterGraph,
    plan: &PlacementPlan,
    schedule: &Schedule,
    tasks: &[TaskSpec],
    times: &TimeMatrix,
    cfg: &RuntimeConfig,
    seed: u64,
    failure: Option<Failure>,
) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    let mut sim = Engine::new(g, plan, schedule, tasks, times, cfg, seed, failure)?;
    sim.run()?;
    Ok(sim.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Priority {
    Demand,
    Prefetch,
}

#[derive(Debug, Clone)]
struct Flow {
    task: usize,
    src: usize,
    dst: usize,
    links: Vec<usize>,
    remaining: f64,
    moved: f64,
    start_at: f64,
    priority: Priority,
    rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Queued,
    Fetching,
    Computing { start: f64, end: f64 },
    Done,
}

#[derive(Debug, Clone)]
struct TaskState {
    node: usize,
    phase: Phase,
    start_s: f64,
    finish_s: f64,
    flow: Option<usize>,
    fetched_to: Option<usize>,
    migrated: bool,
}

#[derive(Debug, Clone)]
struct NodeState {
    alive: bool,
    queue: VecDeque<usize>,
    running: Vec<usize>,
    slots: usize,
    completed: usize,
    total: usize,
    rate: Option<f64>,
    /// Reference task time and predictor-based rate.
    ts: f64,
    bootstrap: f64,
}

/// Standard deviations of execution noise a migration's gain must clear.
const NOISE_MARGIN_SIGMAS: f64 = 2.0;

struct Engine<'a> {
    g: &'a ClusterGraph,
    plan: &'a PlacementPlan,
    tasks: &'a [TaskSpec],
    extra: &'a [f64],
    cfg: &'a RuntimeConfig,
    truth: GroundTruth,
    now: f64,
    nodes: Vec<NodeState>,
    state: Vec<TaskState>,
    flows: Vec<Option<Flow>>,
    events: Vec<SimEvent>,
    done: usize,
    network_mb: f64,
    migrations: usize,
    prefetches: usize,
    lambda: f64,
    cap: MigrationCap,
    q: QTable,
    rng: SimRng,
    failure: Option<Failure>,
}

impl<'a> Engine<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        g: &'a ClusterGraph,
        plan: &'a PlacementPlan,
        schedule: &'a Schedule,
        tasks: &'a [TaskSpec],
        times: &TimeMatrix,
        cfg: &'a RuntimeConfig,
        seed: u64,
        failure: Option<Failure>,
    ) -> Result<Self, SimError> {
        let n = g.len();
        let b = tasks.len();
        let bad = |m: String| Err(SimError::Schedule(m));
        if schedule.assignment.len() != b || schedule.extra_delay_s.len() != b {
            return bad(format!("{} assignments for {b} tasks", schedule.assignment.len()));
        }
        if schedule.queues.len() != n {
            return bad(format!("{} queues for {n} nodes", schedule.queues.len()));
        }
        if times.tasks() != b || times.nodes() != n {
            return bad("time matrix shape differs from tasks x nodes".into());
        }
        if plan.node_count() != n {
            return bad("placement plan was built for another cluster".into());
        }
        if let Some(t) = tasks.iter().find(|t| t.block.0 >= plan.blocks()) {
            return bad(format!("task {} reads unknown block {}", t.id, t.block));
        }
        if let Some(f) = failure {
            if f.node.0 >= n {
                return bad(format!("failure on unknown node {}", f.node));
            }
        }
        let index: HashMap<TaskId, usize> = tasks.iter().enumerate().map(|(j, t)| (t.id, j)).collect();
        let mut seen = vec![false; b];
        let mean_mb = tasks.iter().map(|t| t.size_mb).sum::<f64>() / b.max(1) as f64;
        let mut nodes = Vec::with_capacity(n);
        for (i, q) in schedule.queues.iter().enumerate() {
            let mut queue = VecDeque::with_capacity(q.len());
            for id in q {
                let Some(&j) = index.get(id) else {
                    return bad(format!("queue of node {i} references unknown task {id}"));
                };
                if std::mem::replace(&mut seen[j], true) {
                    return bad(format!("task {id} queued twice"));
                }
                if schedule.assignment[j].0 != i {
                    return bad(format!("task {id} queued on node {i} but assigned to {}", schedule.assignment[j]));
                }
                queue.push_back(j);
            }
            let ts = if b > 0 { times.node_mean(i) } else { 1.0 };
            nodes.push(NodeState {
                alive: true,
                total: queue.len(),
                queue,
                running: Vec::new(),
                slots: g.nodes()[i].slots.max(1) as usize,
                completed: 0,
                rate: None,
                ts,
                bootstrap: mean_mb / ts.max(f64::MIN_POSITIVE),
            });
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return bad(format!("task {} is in no queue", tasks[j].id));
        }
        let state = (0..b)
            .map(|j| TaskState {
                node: schedule.assignment[j].0,
                phase: Phase::Queued,
                start_s: 0.0,
                finish_s: 0.0,
                flow: None,
                fetched_to: None,
                migrated: false,
            })
            .collect();
        Ok(Engine {
            g,
            plan,
            tasks,
            extra: &schedule.extra_delay_s,
            cfg,
            truth: GroundTruth { noise: cfg.noise, seed },
            now: 0.0,
            nodes,
            state,
            flows: Vec::new(),
            events: Vec::new(),
            done: 0,
            network_mb: 0.0,
            migrations: 0,
            prefetches: 0,
            lambda: lambda_or_default(b, n, cfg.lambda_theta),
            cap: MigrationCap::new(n, cfg.theta_mig),
            q: QTable::new(cfg.q_alpha, cfg.q_gamma),
            rng: seed::rng(seed::derive(seed, &[seed::label("migration")])),
            failure,
        })
    }

    fn event(&mut self, kind: EventKind, task: Option<usize>, node: usize) {
        let task = task.map(|j| self.tasks[j].id);
        self.events.push(SimEvent { time_s: self.now, kind, task, node: NodeId(node) });
    }

    /// Part of each link left over by background traffic.
    fn link_share(&self) -> f64 {
        1.0 - self.cfg.background_load
    }

    fn is_local(&self, j: usize, i: usize) -> bool {
        self.plan.holds(NodeId(i), self.tasks[j].block)
    }

    fn has_data(&self, j: usize, i: usize) -> bool {
        self.is_local(j, i) || self.state[j].fetched_to == Some(i)
    }

    fn live_replicas(&self, j: usize) -> Result<Vec<usize>, SimError> {
        let reps: Vec<usize> = self.plan.replicas(self.tasks[j].block)?.iter().map(|r| r.0).filter(|&r| self.nodes[r].alive).collect();
        if reps.is_empty() {
            return Err(SimError::DataLost(self.tasks[j].block));
        }
        Ok(reps)
    }

    /// Widest path, then lowest tier latency, then lower id.
    fn nearest_source(&self, j: usize, dst: usize) -> Result<usize, SimError> {
        let mut best: Option<(f64, f64, usize)> = None;
        for r in self.live_replicas(j)? {
            let bw = self.g.path_bandwidth(NodeId(r), NodeId(dst))?;
            let lat = self.g.tier_latency(self.g.tier(NodeId(r), NodeId(dst))?);
            if best.is_none_or(|(b, l, _)| bw > b || (bw == b && lat < l)) {
                best = Some((bw, lat, r));
            }
        }
        Ok(best.expect("live replicas are non-empty").2)
    }

    /// Replica with the lowest prefetch load factor against an idle, empty
    /// reference point.
    fn swnc_source(&self, j: usize, dst: usize) -> Result<usize, SimError> {
        let reps = self.live_replicas(j)?;
        let mut conns = vec![0usize; self.nodes.len()];
        for f in self.flows.iter().flatten() {
            conns[f.src] += 1;
        }
        let mut delay = Vec::with_capacity(reps.len());
        for &r in &reps {
            let bw = self.g.path_bandwidth(NodeId(r), NodeId(dst))? * self.link_share();
            let lat = self.g.tier_latency(self.g.tier(NodeId(r), NodeId(dst))?);
            delay.push(lat + self.tasks[j].size_mb * (1 + conns[r]) as f64 / bw);
        }
        let load: Vec<f64> = reps.iter().map(|&r| conns[r] as f64).collect();
        let (dn, ln) = (normalize_max(&delay), normalize_max(&load));
        let points: Vec<(NodeId, LoadPoint)> = reps.iter().enumerate().map(|(k, &r)| (NodeId(r), LoadPoint { phi: dn[k], t: ln[k] })).collect();
        Ok(choose_prefetch_source(LoadPoint { phi: 0.0, t: 0.0 }, &points, self.cfg.plf)?.0)
    }

    fn open_flow(&mut self, j: usize, src: usize, dst: usize, priority: Priority) -> Result<(), SimError> {
        let route = self.g.route(NodeId(src), NodeId(dst))?;
        let flow = Flow {
            task: j,
            src,
            dst,
            links: route.links.iter().map(|l| l.0).collect(),
            remaining: self.tasks[j].size_mb,
            moved: 0.0,
            start_at: self.now + self.g.tier_latency(route.tier),
            priority,
            rate: 0.0,
        };
        self.state[j].flow = Some(self.flows.len());
        self.flows.push(Some(flow));
        if priority == Priority::Prefetch {
            self.prefetches += 1;
            self.event(EventKind::Prefetch, Some(j), dst);
        }
        Ok(())
    }

    fn begin_compute(&mut self, j: usize, i: usize) {
        let dur = self.truth.sample(&self.g.nodes()[i], &self.tasks[j]) + self.extra[j];
        self.state[j].phase = Phase::Computing { start: self.now, end: self.now + dur };
    }

    fn start_task(&mut self, j: usize, i: usize) -> Result<(), SimError> {
        self.event(EventKind::Start, Some(j), i);
        self.state[j].start_s = self.now;
        self.nodes[i].running.push(j);
        if self.has_data(j, i) {
            self.begin_compute(j, i);
            return Ok(());
        }
        self.state[j].phase = Phase::Fetching;
        match self.state[j].flow {
            Some(f) => {
                let flow = self.flows[f].as_mut().expect("task flow is open");
                flow.priority = Priority::Demand;
            }
            None => {
                let src = self.nearest_source(j, i)?;
                self.open_flow(j, src, i, Priority::Demand)?;
            }
        }
        Ok(())
    }

    fn dispatch(&mut self) -> Result<(), SimError> {
        for i in 0..self.nodes.len() {
            while self.nodes[i].alive && self.nodes[i].running.len() < self.nodes[i].slots {
                let Some(&j) = self.nodes[i].queue.front() else { break };
                if self.tasks[j].release_s > self.now + EPS_T {
                    break;
                }
                self.nodes[i].queue.pop_front();
                self.start_task(j, i)?;
            }
        }
        Ok(())
    }

    fn prefetch_lookahead(&mut self) -> Result<(), SimError> {
        for i in 0..self.nodes.len() {
            if !self.nodes[i].alive {
                continue;
            }
            let ahead: Vec<usize> = self.nodes[i].queue.iter().take(self.cfg.prefetch_depth).copied().collect();
            for j in ahead {
                if !self.has_data(j, i) && self.state[j].flow.is_none() {
                    let src = self.swnc_source(j, i)?;
                    self.open_flow(j, src, i, Priority::Prefetch)?;
                }
            }
        }
        Ok(())
    }

    fn queue_state(&self, i: usize) -> QueueState {
        let n = &self.nodes[i];
        let running = n
            .running
            .iter()
            .map(|&j| {
                let progress = match self.state[j].phase {
                    Phase::Computing { start, end } if end > start => ((self.now - start) / (end - start)).clamp(0.0, 1.0),
                    _ => 0.0,
                };
                (self.tasks[j].size_mb, progress)
            })
            .collect();
        QueueState {
            node: NodeId(i),
            pending_mb: n.queue.iter().map(|&j| self.tasks[j].size_mb).collect(),
            running,
            observed_rate: n.rate,
            bootstrap_rate: n.bootstrap,
            reference_time_s: n.ts,
            slots: n.slots as u32,
            completed: n.completed,
            total: n.total,
        }
    }

    /// Transfer time of `size` MB from `src` to `dst` if it joined the flows
    /// already open, each link split equally.
    fn fetch_estimate(&self, size: f64, src: usize, dst: usize) -> Result<f64, SimError> {
        let route = self.g.route(NodeId(src), NodeId(dst))?;
        let links = self.g.links();
        let rate = route
            .links
            .iter()
            .map(|l| {
                let sharing = self.flows.iter().flatten().filter(|f| f.links.contains(&l.0)).count();
                links[l.0].bandwidth_mbps * self.link_share() / (1 + sharing) as f64
            })
            .fold(f64::INFINITY, f64::min);
        Ok(self.g.tier_latency(route.tier) + size / rate)
    }

    fn bucket(remaining: f64, ts: f64) -> State {
        let r = remaining / ts.max(f64::MIN_POSITIVE);
        if r < 0.5 {
            0
        } else if r < 1.0 {
            1
        } else if r < 2.0 {
            2
        } else {
            3
        }
    }

    /// One monitoring pass: every target past the gate may pull one tail task
    /// from a loaded source.
    fn migrate(&mut self) -> Result<(), SimError> {
        let n = self.nodes.len();
        let round = (self.now / self.cfg.round_s).floor() as u64;
        self.cap.enter_round(round);
        let epsilon = self.cfg.epsilon * self.cfg.epsilon_decay.powi(round.min(i32::MAX as u64) as i32);
        let states: Vec<QueueState> = (0..n).map(|i| self.queue_state(i)).collect();
        let mut rem: Vec<f64> = states.iter().map(remaining_time).collect();
        for t in 0..n {
            let node = &self.nodes[t];
            if !node.alive || states[t].completion_fraction() <= self.lambda {
                continue;
            }
            let phi_t = self.cfg.phi * node.ts;
            if !(rem[t] > phi_t) {
                continue;
            }
            let mut cands = Vec::new();
            for s in (0..n).filter(|&s| s != t && self.nodes[s].alive) {
                let phi_s = self.cfg.phi * self.nodes[s].ts;
                if resource_quotient(&states[s], self.cfg.rq_form, self.cfg.rq_scale) <= phi_s {
                    continue;
                }
                let Some(&k) = self.nodes[s].queue.back() else { continue };
                if self.state[k].flow.is_some() || self.state[k].fetched_to.is_some() {
                    continue;
                }
                let size = self.tasks[k].size_mb;
                let on_source = size / states[s].rate();
                if !should_migrate(rem[t], rem[s], on_source, phi_t, phi_s) {
                    continue;
                }
                let fetch = if self.is_local(k, t) {
                    0.0
                } else {
                    let src = self.swnc_source(k, t)?;
                    self.fetch_estimate(size, src, t)?
                };
                let finish = rem[t].max(fetch) + size / states[t].rate();
                let gain = rem[s] - finish;
                let cand = Candidate { task: k, source: NodeId(s), target: NodeId(t), gain_s: gain };
                // a move must also clear the execution noise on the target
                let margin = phi_s + NOISE_MARGIN_SIGMAS * self.cfg.noise * finish;
                if gain > margin && self.cap.allows(&cand) {
                    cands.push((cand, on_source, finish));
                }
            }
            let options: Vec<Candidate> = cands.iter().map(|c| c.0).collect();
            let state = Self::bucket(rem[t], self.nodes[t].ts);
            let Some(pick) = epsilon_greedy_migration(&options, &self.q, state, epsilon, &mut self.rng) else { continue };
            let (c, on_source, finish) = cands[pick];
            self.cap.take(&c);
            let (k, s) = (c.task, c.source.0);
            self.nodes[s].queue.pop_back();
            self.nodes[s].total -= 1;
            self.nodes[t].queue.push_back(k);
            self.nodes[t].total += 1;
            self.state[k].node = t;
            self.state[k].migrated = true;
            self.migrations += 1;
            self.event(EventKind::Migrate, Some(k), t);
            log::debug!("t={:.3} migrate task {k} node {s} -> {t}: source left {:.3}, target finish {finish:.3}", self.now, rem[s]);
            if !self.is_local(k, t) {
                let src = self.swnc_source(k, t)?;
                self.open_flow(k, src, t, Priority::Prefetch)?;
            }
            rem[s] -= on_source;
            rem[t] = finish;
            let next = Self::bucket(rem[t], self.nodes[t].ts);
            self.q.update(state, s, c.gain_s / self.nodes[t].ts.max(f64::MIN_POSITIVE), next);
        }
        Ok(())
    }

    /// Demand flows share each link equally; prefetch flows split what the
    /// demand flows leave.
    fn compute_rates(&mut self) {
        let links = self.g.links();
        let mut demand = vec![0usize; links.len()];
        let mut prefetch = vec![0usize; links.len()];
        let now = self.now;
        let active = |f: &Flow| f.start_at <= now + EPS_T;
        for f in self.flows.iter().flatten().filter(|f| active(f)) {
            let counts = if f.priority == Priority::Demand { &mut demand } else { &mut prefetch };
            for &l in &f.links {
                counts[l] += 1;
            }
        }
        let share = self.link_share();
        let mut residual: Vec<f64> = links.iter().map(|l| l.bandwidth_mbps * share).collect();
        for f in self.flows.iter_mut().flatten() {
            f.rate = 0.0;
            if active(f) && f.priority == Priority::Demand {
                f.rate = f.links.iter().map(|&l| links[l].bandwidth_mbps * share / demand[l] as f64).fold(f64::INFINITY, f64::min);
            }
        }
        for f in self.flows.iter().flatten().filter(|f| f.priority == Priority::Demand) {
            for &l in &f.links {
                residual[l] -= f.rate;
            }
        }
        for f in self.flows.iter_mut().flatten() {
            if active(f) && f.priority == Priority::Prefetch {
                f.rate = f.links.iter().map(|&l| residual[l].max(0.0) / prefetch[l] as f64).fold(f64::INFINITY, f64::min);
            }
        }
    }

    fn next_time(&self) -> Option<f64> {
        let mut t = f64::INFINITY;
        for node in &self.nodes {
            for &j in &node.running {
                if let Phase::Computing { end, .. } = self.state[j].phase {
                    t = t.min(end);
                }
            }
            if node.alive && node.running.len() < node.slots {
                if let Some(&j) = node.queue.front() {
                    t = t.min(self.tasks[j].release_s);
                }
            }
        }
        for f in self.flows.iter().flatten() {
            if f.start_at > self.now + EPS_T {
                t = t.min(f.start_at);
            } else if f.rate > 0.0 {
                t = t.min(self.now + f.remaining / f.rate);
            }
        }
        if let Some(f) = self.failure {
            t = t.min(f.at_s.max(self.now));
        }
        t.is_finite().then_some(t.max(self.now))
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.now;
        for f in self.flows.iter_mut().flatten() {
            if f.rate > 0.0 && f.start_at <= self.now + EPS_T {
                let step = (f.rate * dt).min(f.remaining);
                f.remaining -= step;
                f.moved += step;
            }
        }
        self.now = t;
    }

    fn close_flow(&mut self, idx: usize) -> Flow {
        let f = self.flows[idx].take().expect("flow is open");
        self.network_mb += f.moved;
        self.state[f.task].flow = None;
        f
    }

    fn settle(&mut self) -> Result<(), SimError> {
        for idx in 0..self.flows.len() {
            let finished = match &self.flows[idx] {
                Some(f) => f.start_at <= self.now + EPS_T && f.remaining <= EPS_T * self.tasks[f.task].size_mb.max(1.0),
                None => false,
            };
            if !finished {
                continue;
            }
            let mut f = self.close_flow(idx);
            self.network_mb += f.remaining;
            f.remaining = 0.0;
            self.state[f.task].fetched_to = Some(f.dst);
            self.event(EventKind::Transfer, Some(f.task), f.dst);
            if self.state[f.task].phase == Phase::Fetching && self.state[f.task].node == f.dst {
                self.begin_compute(f.task, f.dst);
            }
        }
        for i in 0..self.nodes.len() {
            let mut k = 0;
            while k < self.nodes[i].running.len() {
                let j = self.nodes[i].running[k];
                match self.state[j].phase {
                    Phase::Computing { end, .. } if end <= self.now + EPS_T => {
                        self.nodes[i].running.remove(k);
                        self.state[j].phase = Phase::Done;
                        self.state[j].finish_s = self.now;
                        self.event(EventKind::Finish, Some(j), i);
                        let elapsed = self.now - self.state[j].start_s;
                        let node = &mut self.nodes[i];
                        let rate = self.tasks[j].size_mb / elapsed.max(f64::MIN_POSITIVE);
                        let prior = node.completed as f64;
                        node.rate = Some(node.rate.map_or(rate, |m| (m * prior + rate) / (prior + 1.0)));
                        node.completed += 1;
                        self.done += 1;
                    }
                    _ => k += 1,
                }
            }
        }
        Ok(())
    }

    fn fail_node(&mut self, x: usize) -> Result<(), SimError> {
        self.nodes[x].alive = false;
        self.event(EventKind::Fail, None, x);
        for idx in 0..self.flows.len() {
            let Some(f) = &self.flows[idx] else { continue };
            if f.dst != x && f.src != x {
                continue;
            }
            let f = self.close_flow(idx);
            if f.dst != x && self.state[f.task].phase == Phase::Fetching {
                let src = self.nearest_source(f.task, f.dst)?;
                self.open_flow(f.task, src, f.dst, Priority::Demand)?;
            }
        }
        let node = &mut self.nodes[x];
        let orphans: Vec<usize> = node.running.drain(..).chain(node.queue.drain(..)).collect();
        node.total = node.completed;
        let mut rem: Vec<f64> = (0..self.nodes.len()).map(|i| remaining_time(&self.queue_state(i))).collect();
        for j in orphans {
            let live = |i: &usize| self.nodes[*i].alive;
            let holders: Vec<usize> = (0..self.nodes.len()).filter(live).filter(|&i| self.is_local(j, i)).collect();
            let pool: Vec<usize> = if holders.is_empty() { (0..self.nodes.len()).filter(live).collect() } else { holders };
            let Some(&dst) = pool.iter().min_by(|a, b| rem[**a].total_cmp(&rem[**b]).then(a.cmp(b))) else {
                return Err(SimError::Stalled(self.now));
            };
            let st = &mut self.state[j];
            st.phase = Phase::Queued;
            st.node = dst;
            if st.fetched_to == Some(x) {
                st.fetched_to = None;
            }
            self.nodes[dst].queue.push_back(j);
            self.nodes[dst].total += 1;
            let rate = self.nodes[dst].rate.unwrap_or(self.nodes[dst].bootstrap) * self.nodes[dst].slots as f64;
            rem[dst] += self.tasks[j].size_mb / rate.max(f64::MIN_POSITIVE);
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), SimError> {
        let total = self.tasks.len();
        loop {
            if let Some(f) = self.failure {
                if self.now + EPS_T >= f.at_s {
                    self.failure = None;
                    self.fail_node(f.node.0)?;
                }
            }
            self.dispatch()?;
            if self.cfg.migration {
                self.migrate()?;
                self.dispatch()?;
            }
            if self.cfg.prefetch {
                self.prefetch_lookahead()?;
            }
            if self.done == total {
                return Ok(());
            }
            self.compute_rates();
            let t = self.next_time().ok_or(SimError::Stalled(self.now))?;
            self.advance(t);
            self.settle()?;
        }
    }

    fn finish(self) -> SimTrace {
        let records: Vec<TaskRecord> = self
            .state
            .iter()
            .enumerate()
            .map(|(j, s)| TaskRecord {
                task: self.tasks[j].id,
                node: NodeId(s.node),
                start_s: s.start_s,
                finish_s: s.finish_s,
                local: self.is_local(j, s.node),
                migrated: s.migrated,
            })
            .collect();
        let completion = records.iter().map(|r| r.finish_s).fold(0.0, f64::max);
        let b = records.len();
        let locality = if b == 0 { 1.0 } else { records.iter().filter(|r| r.local).count() as f64 / b as f64 };
        let total_mb: f64 = self.tasks.iter().map(|t| t.size_mb).sum();
        let metrics = SimMetrics {
            completion_s: completion,
            locality,
            throughput_mb_s: if completion > 0.0 { total_mb / completion } else { 0.0 },
            network_mb: self.network_mb,
            recovery_s: None,
            migrations: self.migrations,
            prefetches: self.prefetches,
        };
        SimTrace { events: self.events, tasks: records, metrics }
    }
}
