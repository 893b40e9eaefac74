use criterion::{criterion_group, criterion_main, Criterion};
use slungsim_core::config::SweepSpec;
use slungsim_core::sweep::run_sequential;

/// Twelve short runs: four masses for each controller.
fn spec() -> SweepSpec {
    let mut spec = SweepSpec {
        masses: vec![0.05, 0.2, 0.35, 0.5],
        ..Default::default()
    };
    spec.base.duration = 5.0;
    spec
}

fn sweep(c: &mut Criterion) {
    let configs = spec().runs();
    let mut group = c.benchmark_group("sweep_12_runs_5s");
    group.sample_size(10);
    group.bench_function("sequential", |b| b.iter(|| run_sequential(&configs)));
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| slungsim_core::sweep::run_parallel(&configs, None).unwrap())
    });
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
