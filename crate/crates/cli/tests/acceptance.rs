//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion does.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use sccdso_core::experiment::pipeline::{execute, plan, Environment};
use sccdso_core::experiment::{run_experiment, ExperimentConfig, ExperimentResult};
use sccdso_core::predictor::{fit_kernel, ExecRecord};
use sccdso_core::qos::{path_cost, path_delay, path_loss, EdgeUse, NodeUse, SchedulePath};
use sccdso_core::sched::{run_oracle, solve, AcoConfig, Instance, SchedulerKind, Variant};
use sccdso_core::seed;
use sccdso_core::sim::RuntimeConfig;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).expect("bundled config loads")
}

fn run(cfg: &ExperimentConfig) -> ExperimentResult {
    run_experiment(cfg).expect("experiment runs")
}

fn mean_of(res: &ExperimentResult, cell: usize, k: SchedulerKind, f: fn(&sccdso_core::experiment::AggregateRow) -> Option<f64>) -> f64 {
    res.aggregate_for(cell, k).and_then(f).unwrap_or(f64::NAN)
}

fn oracle_optimality() -> Outcome {
    let start = Instant::now();
    let report = run_oracle(&AcoConfig::standard(), 100, 8, 4, 0.05).expect("oracle runs");
    let secs = start.elapsed().as_secs_f64();
    outcome(
        report.within >= 95 && secs < 60.0,
        format!("{}/{} within 5% of optimum, worst ratio {:.4}, {secs:.1} s", report.within, report.instances, report.worst_ratio),
    )
}

fn constraint_soundness() -> Outcome {
    let mut rng = seed::rng(0xC0A5);
    let (mut violations, mut solved, mut refused) = (0, 0, 0);
    for _ in 0..10_000 {
        let tasks = rng.random_range(1..=8);
        let nodes = rng.random_range(1..=5);
        let times: Vec<Vec<f64>> = (0..tasks).map(|_| (0..nodes).map(|_| rng.random_range(0.1..10.0)).collect()).collect();
        let demand: Vec<f64> = (0..tasks).map(|_| rng.random_range(1.0..128.0)).collect();
        // capacities admit at least one random assignment
        let mut load = vec![0.0; nodes];
        for d in &demand {
            load[rng.random_range(0..nodes)] += d;
        }
        let capacity: Vec<f64> = load.iter().map(|l| l * rng.random_range(1.0..1.5) + rng.random_range(0.0..64.0)).collect();
        let inst = Instance::from_times(&times, Some(capacity.clone()), Some(demand.clone())).expect("instance");
        let cfg = AcoConfig {
            alpha: rng.random_range(0.5..2.5),
            beta: rng.random_range(0.5..3.5),
            rho: rng.random_range(0.05..0.5),
            tau0: rng.random_range(0.01..0.2),
            tau_floor: rng.random_range(1e-4..1e-2),
            ants: rng.random_range(1..=10),
            max_iters: rng.random_range(1..=10),
            variant: if rng.random_bool(0.5) { Variant::Full } else { Variant::Lightweight },
            ..AcoConfig::standard()
        };
        match solve(&inst, &cfg, rng.random(), None) {
            Ok(r) => {
                solved += 1;
                let mut used = vec![0.0; nodes];
                let mut ok = r.best.assignment.len() == tasks;
                for (j, a) in r.best.assignment.iter().enumerate() {
                    match a {
                        Some(i) if *i < nodes => used[*i] += demand[j],
                        _ => ok = false,
                    }
                }
                ok &= used.iter().zip(&capacity).all(|(u, c)| *u <= *c * (1.0 + 1e-12));
                ok &= r.tau_min >= cfg.tau_floor;
                if !ok {
                    violations += 1;
                }
            }
            Err(_) => refused += 1,
        }
    }
    outcome(violations == 0, format!("{solved} solved, {refused} reported infeasible, {violations} violations"))
}

/// Random path with dyadic values, so every sum and quotient is exact.
fn dyadic_path(rng: &mut impl Rng) -> SchedulePath {
    let dy = |rng: &mut dyn rand::RngCore, max: u32| f64::from(rng.random_range(0..max * 8)) / 8.0;
    let edges = (0..rng.random_range(0..6))
        .map(|_| EdgeUse {
            bandwidth_mbps: f64::from(1u32 << rng.random_range(0..10)),
            base_queue_delay_s: dy(rng, 4),
            cost_per_mb: dy(rng, 4),
            carried_mb: dy(rng, 512),
            delay_samples: Vec::new(),
        })
        .collect();
    let nodes = (0..rng.random_range(1..6))
        .map(|_| NodeUse {
            capacity: f64::from(1u32 << rng.random_range(0..30)),
            work_cycles: dy(rng, 1 << 20),
            cost_per_cycle: dy(rng, 4) / 1024.0,
            loss_prob: rng.random_range(0.0..0.2),
            delay_samples: Vec::new(),
        })
        .collect();
    SchedulePath { edges, nodes }
}

fn analytic_qos() -> Outcome {
    let mut rng = seed::rng(0x9055);
    let mut worst_loss: f64 = 0.0;
    let mut additive_failures = 0;
    for _ in 0..1000 {
        let a = dyadic_path(&mut rng);
        let b = dyadic_path(&mut rng);
        // closed form by repeated complement
        let mut survive = 1.0;
        for v in &a.nodes {
            survive *= 1.0 - v.loss_prob;
        }
        worst_loss = worst_loss.max((path_loss(&a) - (1.0 - survive)).abs());
        let ab = a.clone().concat(b.clone());
        let delay_ok = path_delay(&ab).unwrap() == path_delay(&a).unwrap() + path_delay(&b).unwrap();
        let cost_ok = path_cost(&ab) == path_cost(&a) + path_cost(&b);
        let loss_ok = (1.0 - path_loss(&ab) - (1.0 - path_loss(&a)) * (1.0 - path_loss(&b))).abs() <= 1e-12;
        if !(delay_ok && cost_ok && loss_ok) {
            additive_failures += 1;
        }
    }
    outcome(worst_loss <= 1e-12 && additive_failures == 0, format!("max loss error {worst_loss:.2e}, {additive_failures} concatenation mismatches"))
}

/// `t = 0.5 m / io` plus Gaussian noise of `noise` seconds.
fn synthetic(n: usize, s: u64, noise: f64) -> Vec<ExecRecord> {
    let classes = [(3.0, 64.0), (3.6, 32.0), (2.5, 16.0), (1.2, 4.0)];
    let mut rng = seed::rng(s);
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

fn predictor_quality() -> Outcome {
    let train = synthetic(200, 41, 0.05);
    let test = synthetic(200, 42, 0.0);
    let model = fit_kernel(&train, 1.0, 0.05, 400).expect("kernel fit");
    let mae = test.iter().map(|r| (model.predict_features(&r.features).unwrap() - r.observed_time_s).abs()).sum::<f64>() / test.len() as f64;

    let (_, gw, gb) = model.loss_and_gradient(&train);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let rel = |a: f64, fd: f64| (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
    for k in 0..model.coefficients.len() {
        let (mut plus, mut minus) = (model.clone(), model.clone());
        plus.coefficients[k] += h;
        minus.coefficients[k] -= h;
        let fd = (plus.loss_and_gradient(&train).0 - minus.loss_and_gradient(&train).0) / (2.0 * h);
        // entries this close to zero sit below finite-difference resolution
        if gw[k].abs().max(fd.abs()) > 1e-6 {
            worst = worst.max(rel(gw[k], fd));
        }
    }
    let (mut plus, mut minus) = (model.clone(), model.clone());
    plus.bias += h;
    minus.bias -= h;
    let fd = (plus.loss_and_gradient(&train).0 - minus.loss_and_gradient(&train).0) / (2.0 * h);
    if gb.abs().max(fd.abs()) > 1e-6 {
        worst = worst.max(rel(gb, fd));
    }
    outcome(mae <= 0.10 && worst <= 1e-5, format!("held-out MAE {mae:.4} s, worst gradient rel. error {worst:.2e}"))
}

fn directional_headline() -> Outcome {
    let start = Instant::now();
    let res = run(&load("completion-by-size.json"));
    let secs = start.elapsed().as_secs_f64();
    let mut pass = secs < 300.0;
    let mut parts = Vec::new();
    for c in &res.cells {
        let scc = mean_of(&res, c.index, SchedulerKind::SccDso, |a| a.completion_s.map(|s| s.mean));
        let rf = mean_of(&res, c.index, SchedulerKind::RfFd, |a| a.completion_s.map(|s| s.mean));
        let rs = mean_of(&res, c.index, SchedulerKind::Rsync, |a| a.completion_s.map(|s| s.mean));
        let gain = 1.0 - scc / rf;
        pass &= gain >= 0.05 && scc < rs;
        parts.push(format!("{:.0} MB: -{:.1}% vs RF-FD", c.input_mb.unwrap_or(0.0), gain * 100.0));
    }
    outcome(pass, format!("{}; {secs:.1} s", parts.join(", ")))
}

fn locality_band() -> Outcome {
    let res = run(&load("locality-by-nodes.json"));
    let mut pass = true;
    let mut parts = Vec::new();
    for c in &res.cells {
        let loc = |k| mean_of(&res, c.index, k, |a| a.locality.map(|s| s.mean));
        let (scc, rf, rs) = (loc(SchedulerKind::SccDso), loc(SchedulerKind::RfFd), loc(SchedulerKind::Rsync));
        pass &= scc >= 0.85 && scc > rf && scc > rs;
        parts.push(format!("{}: {:.1}%", c.nodes, scc * 100.0));
    }
    outcome(pass, parts.join(", "))
}

fn straggler_dominance() -> Outcome {
    let res = run(&load("stragglers.json"));
    let mut pass = true;
    let mut parts = Vec::new();
    for c in &res.cells {
        let wins = res
            .runs_for(c.index, SchedulerKind::SccDso)
            .zip(res.runs_for(c.index, SchedulerKind::RfFd))
            .filter(|(s, r)| matches!((s.completion_s, r.completion_s), (Some(a), Some(b)) if a < b))
            .count();
        pass &= wins >= 90;
        parts.push(format!("{}: {wins}/{}", c.nodes, res.runs_for(c.index, SchedulerKind::RfFd).count()));
    }
    outcome(pass, parts.join(", "))
}

fn lightweight_fidelity() -> Outcome {
    let res = run(&load("reference-25.json"));
    let full = mean_of(&res, 0, SchedulerKind::SccDso, |a| a.locality.map(|s| s.mean));
    let lite = mean_of(&res, 0, SchedulerKind::SccDsoLite, |a| a.locality.map(|s| s.mean));
    let max_iters = res.runs_for(0, SchedulerKind::SccDsoLite).filter_map(|r| r.iterations).max().unwrap_or(usize::MAX);
    outcome(lite >= 0.9 * full && max_iters <= 20, format!("lite locality {:.1}% vs full {:.1}%, at most {max_iters} iterations", lite * 100.0, full * 100.0))
}

fn prefetch_monotonicity() -> Outcome {
    let cfg = load("reference-25.json");
    let cluster = cfg.load_cluster().unwrap();
    let cell = cfg.cells(cluster.nodes.len())[0];
    let aco = AcoConfig::preset(cfg.preset);
    let (mut worse, mut better) = (0, 0);
    let mut worst: f64 = 0.0;
    for rep in 0..100 {
        let mut env = Environment::build(&cfg, &cluster, None, &cell, rep).expect("environment");
        let p = plan(&mut env, SchedulerKind::SccDso, &aco, &cfg.runtime, seed::derive(cfg.seed, &[rep as u64])).expect("plan");
        let active = execute(&env, &p, None).expect("active run").metrics.completion_s;
        let off = sccdso_core::experiment::pipeline::Planned { runtime: RuntimeConfig { noise: cfg.runtime.noise, ..RuntimeConfig::passive() }, ..p };
        let passive = execute(&env, &off, None).expect("passive run").metrics.completion_s;
        if active > passive * (1.0 + 1e-9) {
            worse += 1;
            worst = worst.max(active / passive - 1.0);
        } else if active < passive * (1.0 - 1e-9) {
            better += 1;
        }
    }
    outcome(worse == 0, format!("{worse} slower (worst +{:.2}%), {better} faster, {} equal", worst * 100.0, 100 - worse - better))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("mixed.json");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_sccdso"))
            .args(["run", "--config"])
            .arg(&config)
            .args(["--reps", "3", "--format", "csv", "--out"])
            .arg(&out)
            .output()
            .expect("binary runs");
        if !status.status.success() {
            return outcome(false, format!("run {k} exited with {}", status.status));
        }
        let files: Vec<Vec<u8>> = ["runs.csv", "aggregate.csv", "table.csv"].iter().map(|f| std::fs::read(out.join(f)).unwrap_or_default()).collect();
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1] && outputs[0].iter().all(|f| !f.is_empty());
    outcome(same, format!("{} CSV files compared", outputs[0].len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle optimality", oracle_optimality),
        ("constraint soundness", constraint_soundness),
        ("analytic QoS checks", analytic_qos),
        ("predictor quality", predictor_quality),
        ("completion time vs baselines", directional_headline),
        ("locality band", locality_band),
        ("straggler dominance", straggler_dominance),
        ("lightweight fidelity", lightweight_fidelity),
        ("prefetch monotonicity", prefetch_monotonicity),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
