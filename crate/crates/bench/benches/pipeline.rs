use criterion::{criterion_group, criterion_main, Criterion};

use roadside_bench::dense_scenario;
use roadside_core::pipeline::{exact_setups, run, RunOptions};

fn end_to_end(c: &mut Criterion) {
    let scenario = dense_scenario(100, 2.0);
    let setups = exact_setups(&scenario).unwrap();
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("100 vehicles, 4 cameras, 20 frames", |b| {
        b.iter(|| run(&scenario, &setups, &RunOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, end_to_end);
criterion_main!(benches);
