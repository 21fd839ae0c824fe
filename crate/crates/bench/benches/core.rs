use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use uql_bench::{majority9, table, tribes};
use uql_core::costsim::{avg_cost_and_error, EvalMode};
use uql_core::oracle;
use uql_core::strategies::{AnalysisCache, WarmupIprr};
use uql_core::Strategy;

fn influence(c: &mut Criterion) {
    let mut g = c.benchmark_group("influence");
    for n in [8usize, 12, 16] {
        let inst = table(n, 1);
        g.bench_with_input(BenchmarkId::new("enumerated", n), &inst, |b, i| b.iter(|| i.function.analysis_enumerated().unwrap()));
    }
    let t = tribes(3, 1);
    g.bench_function("tribes-3-analytic", |b| b.iter(|| black_box(&t.function).analysis().unwrap()));
    g.finish();
}

fn dynamic_programs(c: &mut Criterion) {
    let mut g = c.benchmark_group("dp");
    g.sample_size(10);
    for n in [6usize, 8, 10] {
        let inst = table(n, 2);
        g.bench_with_input(BenchmarkId::new("opt_avg_0", n), &inst, |b, i| b.iter(|| oracle::opt_avg_0(&i.function, &i.costs).unwrap().0));
    }
    let inst = table(5, 3);
    g.bench_function("opt_worst_eps-5", |b| b.iter(|| oracle::opt_worst_eps(&inst.function, &inst.costs, 0.1).unwrap()));
    g.finish();
}

fn warmup_run(c: &mut Criterion) {
    let inst = majority9();
    let cache = AnalysisCache::new(inst.function.clone());
    let factory = |_s: u64| -> uql_core::Result<Box<dyn Strategy>> { Ok(Box::new(WarmupIprr::new(cache.clone(), 0.05)?)) };
    let mut g = c.benchmark_group("warmup");
    g.sample_size(10);
    g.bench_function("maj-9-exact", |b| {
        b.iter(|| avg_cost_and_error(&factory, &inst.function, &inst.costs, 1.0, EvalMode::Exact).unwrap())
    });
    g.finish();
}

criterion_group!(benches, influence, dynamic_programs, warmup_run);
criterion_main!(benches);
