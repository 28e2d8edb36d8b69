use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use lspkit::lsp::EvalContext;
use lspkit::{bisection_search, max_undetected_area, run_eps, solve_steady_state};
use lspkit_bench::{base_demands, load_network, toy_grid};

fn bench_steady_state(c: &mut Criterion) {
    let mut group = c.benchmark_group("steady_state");
    for stem in ["toy3", "toy_grid", "hanoi"] {
        let model = load_network(stem);
        let opts = lspkit::SolverOptions::default();
        let demands = base_demands(&model);
        group.bench_function(stem, |b| {
            b.iter(|| solve_steady_state(&model, &opts, black_box(&demands), &[], None).unwrap())
        });
    }
    group.finish();
}

fn bench_eps(c: &mut Criterion) {
    let f = toy_grid();
    c.bench_function("eps/toy_grid_one_day", |b| {
        b.iter(|| run_eps(&f.model, &f.opts, black_box(&f.demands), None).unwrap())
    });
}

fn bench_fitness(c: &mut Criterion) {
    let f = toy_grid();
    let node = f.space.nodes[0];
    c.bench_function("fitness/max_undetected_area", |b| {
        // A fresh context per batch keeps the evaluation cache from
        // short-circuiting repeated calls.
        b.iter_batched(
            || {
                EvalContext::new(&f.model, f.opts.clone(), &f.demands, &f.detector, &f.space)
                    .unwrap()
            },
            |ctx| max_undetected_area(node, 12, &ctx, None).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bench_search(c: &mut Criterion) {
    let f = toy_grid();
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    group.bench_function("bisection_toy_grid", |b| {
        b.iter_batched(
            || {
                EvalContext::new(&f.model, f.opts.clone(), &f.demands, &f.detector, &f.space)
                    .unwrap()
            },
            |ctx| bisection_search(&f.space, &ctx, true).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_steady_state,
    bench_eps,
    bench_fitness,
    bench_search
);
criterion_main!(benches);
