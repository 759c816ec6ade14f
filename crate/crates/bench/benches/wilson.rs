use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rstmrf::{RngStream, TreeDistribution, WalkRoot, WilsonSampler};
use rstmrf_bench::anisotropic_grid;

fn wilson(c: &mut Criterion) {
    let mut group = c.benchmark_group("wilson");
    group.sample_size(20);
    let sampler = WilsonSampler::default();
    for n in [32, 64, 128] {
        for kappa in [1.0, 100.0] {
            let graph = anisotropic_grid(n, kappa).unwrap();
            let ust = TreeDistribution::from_graph(&graph);
            let mut rng = RngStream::new(0);
            group.bench_with_input(BenchmarkId::new(format!("vertex_root/kappa{kappa}"), n), &n, |b, _| {
                b.iter(|| black_box(sampler.sample(&ust, WalkRoot::Vertex(0), &mut rng).unwrap().steps))
            });
            let terminal = TreeDistribution::from_graph(&graph).with_terminal_weight(0.01).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("terminal/kappa{kappa}"), n), &n, |b, _| {
                b.iter(|| black_box(sampler.sample(&terminal, WalkRoot::Terminal, &mut rng).unwrap().steps))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, wilson);
criterion_main!(benches);
