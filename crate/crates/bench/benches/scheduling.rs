use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sccdso_bench::fixture;
use sccdso_core::predictor::{fit_kernel, predict_matrix};
use sccdso_core::sched::{schedule_scc_dso, AcoConfig};
use sccdso_core::sim::{simulate, RuntimeConfig};

fn aco(c: &mut Criterion) {
    let mut group = c.benchmark_group("aco_schedule");
    group.sample_size(10);
    for nodes in [10, 25, 50] {
        let f = fixture(nodes, 1);
        for (name, cfg) in [("full", AcoConfig::standard()), ("lite", AcoConfig::lightweight())] {
            group.bench_with_input(BenchmarkId::new(name, nodes), &f, |b, f| {
                b.iter(|| schedule_scc_dso(&f.g, &f.workload.tasks, &f.plan, &f.times, &cfg, black_box(7)).unwrap())
            });
        }
    }
    group.finish();
}

fn predictor(c: &mut Criterion) {
    let f = fixture(50, 2);
    let model = fit_kernel(&f.history, 1.0, 0.05, 400).unwrap();
    c.bench_function("kernel_fit_200", |b| b.iter(|| fit_kernel(black_box(&f.history), 1.0, 0.05, 100).unwrap()));
    c.bench_function("kernel_predict_matrix_50", |b| b.iter(|| predict_matrix(&model, f.g.nodes(), black_box(&f.workload.tasks)).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for nodes in [10, 50] {
        let f = fixture(nodes, 3);
        for (name, cfg) in [("passive", RuntimeConfig::passive()), ("active", RuntimeConfig::default())] {
            group.bench_with_input(BenchmarkId::new(name, nodes), &f, |b, f| {
                b.iter(|| simulate(&f.g, &f.plan, &f.schedule, &f.workload.tasks, &f.times, &cfg, black_box(11)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, aco, predictor, simulation);
criterion_main!(benches);
