use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kingman_core::bridges::{death_count_from, entrance_level, sample_stationary_erosion_via_flow};
use kingman_core::diffusions::{build_hierarchy, kernel_transform};
use kingman_core::erosion::{sample_stationary, ErosionParams};
use kingman_core::immigration::{simulate_ancestral_with, AncestralOptions, BlockCountLaw};
use kingman_core::split_rng;

fn stationary_samplers(c: &mut Criterion) {
    let mut g = c.benchmark_group("stationary_erosion");
    for n in [50usize, 1000, 20_000] {
        let params = ErosionParams::new(n, 1.0).unwrap();
        let mut rng = split_rng(1, n as u64);
        g.bench_with_input(BenchmarkId::new("coupling", n), &params, |b, p| {
            b.iter(|| black_box(sample_stationary(p, &mut rng)))
        });
    }
    for n in [5usize, 50] {
        let params = ErosionParams::new(n, 1.0).unwrap();
        let mut rng = split_rng(2, n as u64);
        g.bench_with_input(BenchmarkId::new("flow", n), &params, |b, p| {
            b.iter(|| black_box(sample_stationary_erosion_via_flow(p, &mut rng)))
        });
    }
    g.finish();
}

fn death_counts(c: &mut Criterion) {
    let mut g = c.benchmark_group("death_count_from_entrance");
    for t in [0.01, 0.1, 1.0] {
        let k0 = entrance_level(t, 1e-3);
        let mut rng = split_rng(3, 0);
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| black_box(death_count_from(k0, t, &mut rng)))
        });
    }
    g.finish();
}

fn ancestral(c: &mut Criterion) {
    let law = BlockCountLaw::new(1e4).unwrap();
    let opts = AncestralOptions {
        censor_deaths: Some(13),
        ..Default::default()
    };
    let mut rng = split_rng(4, 0);
    c.bench_function("ancestral_two_types_censored", |b| {
        b.iter(|| black_box(simulate_ancestral_with(&law, 2, opts, &mut rng).unwrap()))
    });
}

fn hierarchy(c: &mut Criterion) {
    let mut g = c.benchmark_group("hierarchy");
    g.sample_size(10);
    for k in [5usize, 30] {
        let mut rng = split_rng(5, k as u64);
        g.bench_with_input(BenchmarkId::new("build_and_transform", k), &k, |b, &k| {
            b.iter(|| {
                let h = build_hierarchy(k, 1e-3, 20.0, &mut rng).unwrap();
                black_box(kernel_transform(&h, 1.0).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    stationary_samplers,
    death_counts,
    ancestral,
    hierarchy
);
criterion_main!(benches);
