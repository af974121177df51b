//! Criterion benchmarks for the per-query, per-chain, and per-estimate hot
//! paths: reverse-iteration sampling, the W₂ estimators, and grid/bound
//! construction.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ddpmw2_bench::{gaussian_cloud, sampler_config};
use ddpmw2_core::metrics::{w2_bures_fit, w2_exact_empirical, w2_sliced};
use ddpmw2_core::rng::{chain_rng, Lane};
use ddpmw2_core::sampler::run_ddpm;
use ddpmw2_core::schedule::{build_schedule, ScheduleParams};
use ddpmw2_core::theory::{thm_bound, BoundParams, TheoremKind};

fn sampler_benches(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampler");
    group.sample_size(20);
    // 128 chains × 65 oracle queries each; the exact/noisy pair isolates
    // the cost of the oracle perturbation layer.
    for spec in ["exact", "gauss:1"] {
        let config = sampler_config(32, 128, spec);
        group.bench_function(format!("run_ddpm/k0=32/chains=128/{spec}"), |b| {
            b.iter(|| black_box(run_ddpm(black_box(&config)).unwrap()))
        });
    }
    group.finish();
}

fn metrics_benches(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    group.sample_size(20);
    let (xs_small, ys_small) = (gaussian_cloud(256, 2, 1), gaussian_cloud(256, 2, 2));
    group.bench_function("w2_exact_empirical/n=256", |b| {
        b.iter(|| black_box(w2_exact_empirical(&xs_small, &ys_small).unwrap().value))
    });
    let (xs, ys) = (gaussian_cloud(1024, 8, 3), gaussian_cloud(1024, 8, 4));
    group.bench_function("w2_bures_fit/n=1024/d=8", |b| {
        b.iter(|| black_box(w2_bures_fit(&xs, &ys).unwrap().value))
    });
    group.bench_function("w2_sliced/n=1024/d=8/slices=32", |b| {
        b.iter(|| {
            let mut rng = chain_rng(5, 0, Lane::Slices);
            black_box(w2_sliced(&xs, &ys, 32, &mut rng).unwrap().value)
        })
    });
    group.finish();
}

fn theory_benches(c: &mut Criterion) {
    let mut group = c.benchmark_group("theory");
    group.bench_function("build_schedule/k0=4096", |b| {
        let params = ScheduleParams::with_default_delta(3.0, 1.0, 4096);
        b.iter(|| black_box(build_schedule(black_box(&params)).unwrap()))
    });
    group.bench_function("thm_bound", |b| {
        let params = BoundParams {
            m: Some(1.0),
            b: 0.5,
            big_m: 0.25,
            t1: 3.0,
            h_max: 0.01,
            eps_b: 0.001,
            eps_v: 0.05,
            d: 8,
        };
        b.iter(|| black_box(thm_bound(TheoremKind::Thm1, black_box(&params)).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, sampler_benches, metrics_benches, theory_benches);
criterion_main!(benches);
