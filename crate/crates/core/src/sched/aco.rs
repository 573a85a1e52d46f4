use std::cmp::Ordering;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::instance::{Instance, L_MAX};
use super::SchedError;
use crate::qos::{objective, Metrics, ObjectiveWeights};
use crate::seed::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Kernel predictor, every feasible ant deposits `Q / L`.
    Full,
    /// Five ants, linear predictor, EWMA reinforcement of the best schedule.
    Lightweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// `J = w1 delay + w2 cost + w3 loss` on normalized metrics.
    Weighted,
    Makespan,
}

impl FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted" | "j" => Ok(ObjectiveKind::Weighted),
            "makespan" => Ok(ObjectiveKind::Makespan),
            other => Err(format!("unknown objective '{other}'")),
        }
    }
}

/// Desirability `η` used during construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    /// `1 / T_ij`.
    Static,
    /// `1 / (load_i + T_ij)`: the node's finish time if the task lands there.
    LoadAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Standard,
    Tuned,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Preset::Standard),
            "tuned" => Ok(Preset::Tuned),
            other => Err(format!("unknown preset '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcoConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Evaporation rate.
    pub rho: f64,
    pub tau0: f64,
    pub q_const: f64,
    pub ants: usize,
    pub max_iters: usize,
    /// Relative improvement below which an iteration counts as stalled.
    pub tol: f64,
    pub tau_floor: f64,
    pub weights: ObjectiveWeights,
    pub variant: Variant,
    pub objective: ObjectiveKind,
    pub heuristic: Heuristic,
    /// Candidate nodes per task.
    pub l_max: usize,
    /// Consecutive stalled iterations before stopping.
    pub stall_limit: usize,
    /// Seed the search with the pre-allocation queue when one is given.
    pub warm_start: bool,
}

impl Default for AcoConfig {
    fn default() -> Self {
        Self::tuned()
    }
}

impl AcoConfig {
    pub fn standard() -> Self {
        AcoConfig {
            alpha: 1.5,
            beta: 2.5,
            rho: 0.2,
            tau0: 0.05,
            q_const: 100.0,
            ants: 20,
            max_iters: 50,
            tol: 1e-3,
            tau_floor: 1e-3,
            weights: ObjectiveWeights::standard(),
            variant: Variant::Full,
            objective: ObjectiveKind::Weighted,
            heuristic: Heuristic::LoadAware,
            l_max: L_MAX,
            stall_limit: 5,
            warm_start: true,
        }
    }

    pub fn tuned() -> Self {
        AcoConfig { alpha: 0.8, beta: 1.2, rho: 0.1, ants: 10, max_iters: 30, weights: ObjectiveWeights::tuned(), ..Self::standard() }
    }

    pub fn lightweight() -> Self {
        AcoConfig { ants: 5, variant: Variant::Lightweight, ..Self::tuned() }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Standard => Self::standard(),
            Preset::Tuned => Self::tuned(),
        }
    }

    /// Colony size actually used.
    pub fn colony(&self) -> usize {
        match self.variant {
            Variant::Full => self.ants,
            Variant::Lightweight => 5,
        }
    }

    /// Hard checks fail; out-of-range but usable values come back as
    /// warnings.
    pub fn validate(&self) -> Result<Vec<String>, SchedError> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("rho", self.rho),
            ("tau0", self.tau0),
            ("q_const", self.q_const),
            ("tol", self.tol),
            ("tau_floor", self.tau_floor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SchedError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rho >= 1.0 {
            return Err(SchedError::Config(format!("rho must be below 1, got {}", self.rho)));
        }
        if self.ants == 0 || self.max_iters == 0 || self.l_max == 0 {
            return Err(SchedError::Config("ants, max_iters and l_max must be at least 1".into()));
        }
        self.weights.validate().map_err(|e| SchedError::Config(e.to_string()))?;
        let ranges = [
            ("alpha", self.alpha, 1.0, 2.0),
            ("beta", self.beta, 2.0, 3.0),
            ("rho", self.rho, 0.1, 0.3),
            ("tau0", self.tau0, 0.01, 0.1),
            ("q_const", self.q_const, 100.0, 500.0),
            ("ants", self.ants as f64, 10.0, 20.0),
            ("max_iters", self.max_iters as f64, 20.0, 50.0),
            ("tau_floor", self.tau_floor, 1e-4, 1e-2),
            ("tol", self.tol, 1e-3, 1e-2),
        ];
        let warnings: Vec<String> = ranges
            .iter()
            .filter(|(_, v, lo, hi)| v < lo || v > hi)
            .map(|(name, v, lo, hi)| format!("{name}={v} outside [{lo}, {hi}]"))
            .collect();
        for w in &warnings {
            log::debug!("aco config: {w}");
        }
        Ok(warnings)
    }
}

/// Dense task-major pheromone matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PheromoneMatrix {
    nodes: usize,
    tau: Vec<f64>,
}

impl PheromoneMatrix {
    pub fn new(tasks: usize, nodes: usize, tau0: f64) -> Self {
        PheromoneMatrix { nodes, tau: vec![tau0; tasks * nodes] }
    }

    pub fn get(&self, task: usize, node: usize) -> f64 {
        self.tau[task * self.nodes + node]
    }

    pub fn set(&mut self, task: usize, node: usize, v: f64) {
        self.tau[task * self.nodes + node] = v;
    }

    pub fn min(&self) -> f64 {
        self.tau.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn values(&self) -> &[f64] {
        &self.tau
    }

    fn evaporate(&mut self, rho: f64) {
        for t in &mut self.tau {
            *t *= 1.0 - rho;
        }
    }

    fn clamp(&mut self, floor: f64) {
        for t in &mut self.tau {
            *t = t.max(floor);
        }
    }
}

/// One ant's schedule. Assignments are node indices of the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntSolution {
    pub assignment: Vec<Option<usize>>,
    pub makespan: f64,
    pub metrics: Metrics,
    pub objective: f64,
    pub feasible: bool,
}

impl AntSolution {
    pub fn evaluate(inst: &Instance, cfg: &AcoConfig, assignment: Vec<Option<usize>>) -> Self {
        let e = inst.evaluate(&assignment);
        let objective = match cfg.objective {
            ObjectiveKind::Makespan => e.makespan,
            ObjectiveKind::Weighted => objective(&inst.bounds.normalize(&e.metrics), &cfg.weights).unwrap_or(f64::INFINITY),
        };
        AntSolution { assignment, makespan: e.makespan, metrics: e.metrics, objective, feasible: e.feasible }
    }

    pub fn unassigned(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }

    /// Objective, then makespan, then lexicographic assignment.
    pub fn cmp_quality(&self, other: &AntSolution) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.makespan.total_cmp(&other.makespan))
            .then_with(|| self.assignment.cmp(&other.assignment))
    }
}

/// `P_i ∝ τ_i^α η_i^β`, computed in log space.
pub fn selection_probabilities(tau: &[f64], eta: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let logw: Vec<f64> = tau.iter().zip(eta).map(|(t, e)| alpha * t.ln() + beta * e.ln()).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Builds one schedule: tasks in a random order, each drawn from the
/// capacity-feasible candidates in proportion to `τ^α η^β`. Tasks with no
/// feasible node stay unassigned and the solution is marked infeasible.
pub fn construct_solution(inst: &Instance, pher: &PheromoneMatrix, cfg: &AcoConfig, rng: &mut SimRng) -> AntSolution {
    construct_counted(inst, pher, cfg, rng).0
}

fn construct_counted(inst: &Instance, pher: &PheromoneMatrix, cfg: &AcoConfig, rng: &mut SimRng) -> (AntSolution, u64) {
    let mut order: Vec<usize> = (0..inst.tasks).collect();
    order.shuffle(rng);
    let mut load = vec![0.0; inst.nodes];
    let mut used = vec![0.0; inst.nodes];
    let mut assignment = vec![None; inst.tasks];
    let mut eligible: Vec<usize> = Vec::with_capacity(inst.nodes);
    let mut logw: Vec<f64> = Vec::with_capacity(inst.nodes);
    let mut ops = 0u64;
    for &j in &order {
        let fits = |i: usize, used: &[f64]| used[i] + inst.demand_mb[j] <= inst.capacity_mb[i] * (1.0 + 1e-12);
        eligible.clear();
        eligible.extend(inst.candidates[j].iter().copied().filter(|&i| fits(i, &used)));
        if eligible.is_empty() {
            eligible.extend((0..inst.nodes).filter(|&i| fits(i, &used)));
        }
        if eligible.is_empty() {
            continue;
        }
        logw.clear();
        for &i in &eligible {
            let eta = match cfg.heuristic {
                Heuristic::Static => 1.0 / inst.time(j, i),
                Heuristic::LoadAware => 1.0 / (load[i] + inst.load(j, i)),
            };
            logw.push(cfg.alpha * pher.get(j, i).ln() + cfg.beta * eta.ln());
        }
        ops += eligible.len() as u64;
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logw {
            *l = (*l - max).exp();
            total += *l;
        }
        let mut r = rng.random::<f64>() * total;
        let mut pick = eligible[eligible.len() - 1];
        for (k, w) in logw.iter().enumerate() {
            if r < *w {
                pick = eligible[k];
                break;
            }
            r -= w;
        }
        assignment[j] = Some(pick);
        load[pick] += inst.load(j, pick);
        used[pick] += inst.demand_mb[j];
    }
    (AntSolution::evaluate(inst, cfg, assignment), ops)
}

/// `τ ← (1-ρ)τ + Σ_k Q / L_k` on the edges each feasible ant used, then the
/// floor.
pub fn update_pheromones_full(pher: &mut PheromoneMatrix, solutions: &[AntSolution], cfg: &AcoConfig) {
    pher.evaporate(cfg.rho);
    for s in solutions.iter().filter(|s| s.feasible && s.makespan > 0.0) {
        let deposit = cfg.q_const / s.makespan;
        for (j, a) in s.assignment.iter().enumerate() {
            if let Some(i) = *a {
                let v = pher.get(j, i) + deposit;
                pher.set(j, i, v);
            }
        }
    }
    pher.clamp(cfg.tau_floor);
}

/// `τ ← (1-ρ)τ + ρ / T_ij` on the best schedule's edges, evaporation
/// elsewhere, then the floor.
pub fn update_pheromones_ewma(pher: &mut PheromoneMatrix, best: &AntSolution, inst: &Instance, cfg: &AcoConfig) {
    pher.evaporate(cfg.rho);
    if best.feasible {
        for (j, a) in best.assignment.iter().enumerate() {
            if let Some(i) = *a {
                let v = pher.get(j, i) + cfg.rho / inst.time(j, i);
                pher.set(j, i, v);
            }
        }
    }
    pher.clamp(cfg.tau_floor);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub best_objective: f64,
    pub best_makespan: f64,
    pub mean_makespan: f64,
    pub feasible_ants: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub best: AntSolution,
    pub trace: Vec<TraceRow>,
    /// Iterations run before stopping.
    pub iterations: usize,
    /// Stopped on the stall criterion rather than the iteration cap.
    pub converged: bool,
    /// Candidate weight evaluations per iteration.
    pub ops_per_iter: Vec<u64>,
    /// Smallest pheromone entry when the search stopped.
    pub tau_min: f64,
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the colony on `inst`. Keeps the best feasible schedule ever seen and
/// stops after `stall_limit` consecutive iterations improving the best
/// objective by less than `tol` (relative), or after `max_iters`.
pub fn solve(inst: &Instance, cfg: &AcoConfig, seed: u64, warm: Option<&[usize]>) -> Result<SolveReport, SchedError> {
    cfg.validate()?;
    let mut pher = PheromoneMatrix::new(inst.tasks, inst.nodes, cfg.tau0);
    let mut best: Option<AntSolution> = None;
    let mut best_infeasible: Option<AntSolution> = None;

    if let (true, Some(w)) = (cfg.warm_start, warm) {
        if w.len() != inst.tasks || w.iter().any(|&i| i >= inst.nodes) {
            return Err(SchedError::Shape("warm start does not match instance".into()));
        }
        let s = AntSolution::evaluate(inst, cfg, w.iter().map(|&i| Some(i)).collect());
        if s.feasible {
            match cfg.variant {
                Variant::Full => update_pheromones_full(&mut pher, std::slice::from_ref(&s), cfg),
                Variant::Lightweight => update_pheromones_ewma(&mut pher, &s, inst, cfg),
            }
            best = Some(s);
        }
    }

    let mut trace = Vec::new();
    let mut ops_per_iter = Vec::new();
    let mut stalls = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let prev = best.as_ref().map_or(f64::INFINITY, |b| b.objective);
        let mut ops = 0;
        let ants: Vec<AntSolution> = (0..cfg.colony())
            .map(|k| {
                let mut rng = seed::rng(seed::derive(seed, &[it as u64, k as u64]));
                let (s, n) = construct_counted(inst, &pher, cfg, &mut rng);
                ops += n;
                s
            })
            .collect();
        ops_per_iter.push(ops);
        for s in &ants {
            let slot = if s.feasible { &mut best } else { &mut best_infeasible };
            let better = match slot.as_ref() {
                None => true,
                Some(b) if s.feasible => s.cmp_quality(b) == Ordering::Less,
                Some(b) => s.unassigned() < b.unassigned(),
            };
            if better {
                *slot = Some(s.clone());
            }
        }
        match cfg.variant {
            Variant::Full => update_pheromones_full(&mut pher, &ants, cfg),
            Variant::Lightweight => {
                if let Some(b) = &best {
                    update_pheromones_ewma(&mut pher, b, inst, cfg);
                } else {
                    pher.evaporate(cfg.rho);
                    pher.clamp(cfg.tau_floor);
                }
            }
        }
        let feasible: Vec<&AntSolution> = ants.iter().filter(|s| s.feasible).collect();
        let mean_makespan = if feasible.is_empty() {
            f64::NAN
        } else {
            feasible.iter().map(|s| s.makespan).sum::<f64>() / feasible.len() as f64
        };
        let (best_objective, best_makespan) = best.as_ref().map_or((f64::INFINITY, f64::INFINITY), |b| (b.objective, b.makespan));
        trace.push(TraceRow { iter: it, best_objective, best_makespan, mean_makespan, feasible_ants: feasible.len() });

        let improved = if prev.is_finite() {
            let scale = prev.abs().max(f64::MIN_POSITIVE);
            (prev - best_objective) / scale >= cfg.tol
        } else {
            best_objective.is_finite()
        };
        stalls = if improved { 0 } else { stalls + 1 };
        if stalls >= cfg.stall_limit {
            converged = true;
            break;
        }
    }
    match best {
        Some(best) => Ok(SolveReport { best, trace, iterations, converged, ops_per_iter, tau_min: pher.min() }),
        None => {
            let diag = best_infeasible.expect("at least one ant ran");
            Err(SchedError::NoFeasible { unassigned: diag.unassigned(), makespan: diag.makespan })
        }
    }
}

/// Exhaustive `n^B` minimum makespan; only for tiny instances.
pub fn brute_force_makespan(inst: &Instance) -> Option<f64> {
    let (b, n) = (inst.tasks, inst.nodes);
    let total = (n as u64).checked_pow(b as u32)?;
    let mut best: Option<f64> = None;
    let mut assignment = vec![Some(0); b];
    for code in 0..total {
        let mut c = code;
        for a in assignment.iter_mut() {
            *a = Some((c % n as u64) as usize);
            c /= n as u64;
        }
        let e = inst.evaluate(&assignment);
        if e.feasible && best.is_none_or(|m| e.makespan < m) {
            best = Some(e.makespan);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn makespan_cfg() -> AcoConfig {
        AcoConfig { objective: ObjectiveKind::Makespan, ..AcoConfig::standard() }
    }

    #[test]
    fn uniform_choice_is_uniform() {
        let p = selection_probabilities(&[0.1; 3], &[0.5; 3], 1.5, 2.5);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
        let inst = Instance::from_times(&[vec![1.0, 1.0, 1.0]], None, None).unwrap();
        let pher = PheromoneMatrix::new(1, 3, 0.1);
        let cfg = AcoConfig { heuristic: Heuristic::Static, ..makespan_cfg() };
        let mut counts = [0usize; 3];
        let mut rng = seed::rng(5);
        for _ in 0..30_000 {
            counts[construct_solution(&inst, &pher, &cfg, &mut rng).assignment[0].unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015, "{counts:?}");
        }
    }

    #[test]
    fn large_beta_is_greedy() {
        let times = [vec![2.0, 1.5, 1.0, 3.0]];
        let inst = Instance::from_times(&times, None, None).unwrap();
        let pher = PheromoneMatrix::new(1, 4, 0.1);
        let cfg = AcoConfig { beta: 50.0, heuristic: Heuristic::Static, ..makespan_cfg() };
        let argmin = 2;
        let mut rng = seed::rng(1);
        let hits = (0..1000).filter(|_| construct_solution(&inst, &pher, &cfg, &mut rng).assignment[0] == Some(argmin)).count();
        assert!(hits >= 999, "{hits}");
    }

    #[test]
    fn single_node_takes_everything() {
        let inst = Instance::from_times(&[vec![1.0], vec![2.0]], None, None).unwrap();
        let pher = PheromoneMatrix::new(2, 1, 0.1);
        let s = construct_solution(&inst, &pher, &makespan_cfg(), &mut seed::rng(0));
        assert_eq!(s.assignment, vec![Some(0), Some(0)]);
        assert_eq!(s.makespan, 3.0);
    }

    #[test]
    fn exhausted_capacity_is_infeasible_not_panic() {
        let inst = Instance::from_times(&vec![vec![1.0, 1.0]; 3], Some(vec![1.0, 1.0]), None).unwrap();
        let pher = PheromoneMatrix::new(3, 2, 0.1);
        let s = construct_solution(&inst, &pher, &makespan_cfg(), &mut seed::rng(0));
        assert!(!s.feasible);
        assert_eq!(s.unassigned(), 1);
        assert!(matches!(solve(&inst, &makespan_cfg(), 0, None), Err(SchedError::NoFeasible { unassigned: 1, .. })));
    }

    #[test]
    fn full_update_examples() {
        let inst = Instance::from_times(&[vec![1.0, 1.0]], None, None).unwrap();
        let cfg = AcoConfig { rho: 0.1, q_const: 100.0, tau_floor: 1e-3, ..makespan_cfg() };
        let mut p = PheromoneMatrix::new(1, 2, 1.0);
        update_pheromones_full(&mut p, &[], &cfg);
        assert!((p.get(0, 0) - 0.9).abs() < 1e-12);

        let mut p = PheromoneMatrix::new(1, 2, 1.0);
        let mut ant = AntSolution::evaluate(&inst, &cfg, vec![Some(1)]);
        ant.makespan = 50.0;
        update_pheromones_full(&mut p, &[ant], &cfg);
        assert!((p.get(0, 1) - (0.9 + 2.0)).abs() < 1e-12);
        assert!((p.get(0, 0) - 0.9).abs() < 1e-12);

        let mut p = PheromoneMatrix::new(1, 2, 1.1e-3);
        update_pheromones_full(&mut p, &[], &cfg);
        assert_eq!(p.min(), 1e-3);
    }

    #[test]
    fn ewma_update_examples() {
        let inst = Instance::from_times(&[vec![2.0, 1.0]], None, None).unwrap();
        let cfg = AcoConfig { rho: 0.1, ..AcoConfig::lightweight() };
        let best = AntSolution::evaluate(&inst, &cfg, vec![Some(0)]);
        let mut p = PheromoneMatrix::new(1, 2, 1.0);
        update_pheromones_ewma(&mut p, &best, &inst, &cfg);
        assert!((p.get(0, 0) - 0.95).abs() < 1e-12);
        assert!((p.get(0, 1) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ewma_converges_to_inverse_time() {
        let inst = Instance::from_times(&[vec![2.0, 1.0], vec![4.0, 0.5]], None, None).unwrap();
        let cfg = AcoConfig { rho: 0.1, tau_floor: 1e-4, ..AcoConfig::lightweight() };
        let best = AntSolution::evaluate(&inst, &cfg, vec![Some(0), Some(1)]);
        let mut p = PheromoneMatrix::new(2, 2, 0.05);
        for _ in 0..500 {
            update_pheromones_ewma(&mut p, &best, &inst, &cfg);
        }
        assert!((p.get(0, 0) - 0.5).abs() < 1e-9);
        assert!((p.get(1, 1) - 2.0).abs() < 1e-9);
        assert_eq!(p.get(0, 1), 1e-4);
    }

    #[test]
    fn two_identical_tasks_split() {
        let inst = Instance::from_times(&[vec![3.0, 3.0], vec![3.0, 3.0]], None, None).unwrap();
        let r = solve(&inst, &makespan_cfg(), 7, None).unwrap();
        assert_eq!(r.best.makespan, 3.0);
    }

    #[test]
    fn solve_is_deterministic_and_trace_monotone() {
        let times: Vec<Vec<f64>> = (0..12).map(|j| (0..4).map(|i| 1.0 + ((j * 7 + i * 3) % 5) as f64).collect()).collect();
        let inst = Instance::from_times(&times, None, None).unwrap();
        let cfg = AcoConfig::standard();
        let a = solve(&inst, &cfg, 3, None).unwrap();
        let b = solve(&inst, &cfg, 3, None).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.trace, b.trace);
        for w in a.trace.windows(2) {
            assert!(w[1].best_objective <= w[0].best_objective);
        }
        let mut out = Vec::new();
        write_trace_csv(&a.trace, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("iter,best_objective,best_makespan,mean_makespan,feasible_ants\n"));
    }

    #[test]
    fn warm_start_is_never_worse() {
        let times: Vec<Vec<f64>> = (0..10).map(|j| (0..3).map(|i| 1.0 + ((j + 2 * i) % 4) as f64).collect()).collect();
        let inst = Instance::from_times(&times, None, None).unwrap();
        let warm: Vec<usize> = (0..10).map(|j| j % 3).collect();
        let w = AntSolution::evaluate(&inst, &makespan_cfg(), warm.iter().map(|&i| Some(i)).collect());
        let r = solve(&inst, &makespan_cfg(), 1, Some(&warm)).unwrap();
        assert!(r.best.makespan <= w.makespan);
    }

    #[test]
    fn config_validation() {
        assert!(AcoConfig::standard().validate().unwrap().is_empty());
        assert!(!AcoConfig::tuned().validate().unwrap().is_empty());
        assert!(AcoConfig { ants: 0, ..AcoConfig::standard() }.validate().is_err());
        assert!(AcoConfig { alpha: -1.0, ..AcoConfig::standard() }.validate().is_err());
        assert_eq!(AcoConfig { ants: 20, ..AcoConfig::lightweight() }.colony(), 5);
    }

    #[test]
    fn lightweight_ops_linear_in_tasks_times_nodes() {
        let cfg = AcoConfig { max_iters: 3, stall_limit: 10, ..AcoConfig::lightweight() };
        for (b, n) in [(4, 2), (8, 3), (16, 5)] {
            let inst = Instance::from_times(&vec![vec![1.0; n]; b], None, None).unwrap();
            let r = solve(&inst, &cfg, 0, None).unwrap();
            assert!(r.ops_per_iter.iter().all(|&o| o == (5 * b * n) as u64));
        }
    }

    #[test]
    fn brute_force_small() {
        let inst = Instance::from_times(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]], None, None).unwrap();
        assert_eq!(brute_force_makespan(&inst), Some(2.0));
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_scale_free(
            tau in proptest::collection::vec(1e-4f64..10.0, 1..8),
            scale in 1e-3f64..1e3,
            alpha in 0.5f64..2.0,
            beta in 0.5f64..3.0,
            seed in any::<u64>(),
        ) {
            let mut rng = seed::rng(seed);
            let eta: Vec<f64> = tau.iter().map(|_| rand::Rng::random_range(&mut rng, 0.01..10.0)).collect();
            let p = selection_probabilities(&tau, &eta, alpha, beta);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let scaled: Vec<f64> = eta.iter().map(|e| e * scale).collect();
            let q = selection_probabilities(&tau, &scaled, alpha, beta);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn pheromones_stay_above_floor(rho in 0.01f64..0.99, floor in 1e-4f64..1e-2, steps in 1usize..40, seed in any::<u64>()) {
            let times: Vec<Vec<f64>> = (0..4).map(|j| (0..3).map(|i| 0.5 + ((j + i) % 3) as f64).collect()).collect();
            let inst = Instance::from_times(&times, None, None).unwrap();
            let cfg = AcoConfig { rho, tau_floor: floor, ..makespan_cfg() };
            let mut p = PheromoneMatrix::new(4, 3, 0.05);
            let mut rng = seed::rng(seed);
            for k in 0..steps {
                let s = construct_solution(&inst, &p, &cfg, &mut rng);
                if k % 2 == 0 {
                    update_pheromones_full(&mut p, &[s], &cfg);
                } else {
                    update_pheromones_ewma(&mut p, &s, &inst, &cfg);
                }
                prop_assert!(p.min() >= floor);
            }
        }
    }
}
