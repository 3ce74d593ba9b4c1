use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parlens_core::learn::{train, QLearningConfig, StageEnv};
use parlens_core::sim::{compare_policies, Policy, SimConfig};
use parlens_core::task::{parallelizability, Capacity, TaskGraph};
use parlens_core::{build_graph, parse_layout, si_from_counts, TaskSpec};

const KITCHEN: &str = "WWWWOWWWWW\nW        W\nB  WWW   P\nW        W\nW  W  W  P\nW        W\nWWWSWWWWWW\n";

fn bound(c: &mut Criterion) {
    let caps: Vec<Capacity> = (0..32).map(|i| Capacity::Finite(1 + i % 5)).collect();
    let fractions = vec![1.0 / 32.0; 32];
    let task = TaskGraph::from_fractions(&fractions, &caps).unwrap();
    c.bench_function("parallelizability/m32", |b| b.iter(|| parallelizability(black_box(&task), 8)));
}

fn layout(c: &mut Criterion) {
    let spec = parse_layout(KITCHEN).unwrap();
    c.bench_function("layout/build_graph", |b| b.iter(|| build_graph(black_box(&spec))));
    let graph = build_graph(&spec);
    let task = TaskSpec::onion_soup(3);
    c.bench_function("layout/estimate_onion_soup", |b| b.iter(|| task.to_task_graph(Some(black_box(&graph)))));
}

fn specialization(c: &mut Criterion) {
    let counts: Vec<Vec<u64>> = (0..8).map(|a| (0..16).map(|k| ((a * 7 + k * 3) % 11) as u64 + 1).collect()).collect();
    c.bench_function("si_from_counts/8x16", |b| b.iter(|| si_from_counts(black_box(&counts))));
}

fn simulation(c: &mut Criterion) {
    let task = TaskGraph::from_fractions(&[0.2, 0.5, 0.3], &[Capacity::Unbounded, Capacity::Finite(2), Capacity::Unbounded]).unwrap();
    let mut group = c.benchmark_group("simulate");
    for agents in [2usize, 4, 8] {
        let config = SimConfig::new(task.clone(), agents, 20, 50 * agents, Policy::Generalist);
        group.bench_with_input(BenchmarkId::new("compare_policies", agents), &config, |b, cfg| {
            b.iter(|| compare_policies(black_box(cfg)))
        });
    }
    group.finish();
}

fn learning(c: &mut Criterion) {
    let task = TaskGraph::from_fractions(&[0.5, 0.5], &[Capacity::Finite(1); 2]).unwrap();
    let env = StageEnv::new(&task, 2, 8).unwrap();
    let config = QLearningConfig {
        episodes: 100,
        ..QLearningConfig::default()
    };
    let mut group = c.benchmark_group("learn");
    group.sample_size(10);
    group.bench_function("train/100_episodes", |b| b.iter(|| train(black_box(&env), &config)));
    group.finish();
}

criterion_group!(benches, bound, layout, specialization, simulation, learning);
criterion_main!(benches);
