use std::hint::black_box;

use adalezo::objectives::smoothed_grad_mc_with;
use adalezo::validate::{check_unbiasedness, check_variance, unbiasedness_instance, Reference};
use adalezo::{Exec, GradientOracle};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn variance(c: &mut Criterion) {
    let v = [4.0, 1.0, 0.5, 0.25, 2.0, 8.0];
    let p = [0.1, 0.2, 0.2, 0.1, 0.2, 0.2];
    let mut g = c.benchmark_group("check_variance");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(check_variance(&v, &p, 2, 200_000, 7, exec).unwrap()))
        });
    }
    g.finish();
}

fn smoothed_gradient(c: &mut Criterion) {
    let (obj, theta, _) = unbiasedness_instance(1).unwrap();
    let mut g = c.benchmark_group("smoothed_grad_mc");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(smoothed_grad_mc_with(&obj, &theta, 1e-3, 50_000, 3, exec).unwrap()))
        });
    }
    g.finish();
}

fn unbiasedness(c: &mut Criterion) {
    let (obj, theta, setup) = unbiasedness_instance(1).unwrap();
    let grad = obj.oracle_grad(&theta);
    let mut g = c.benchmark_group("check_unbiasedness");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                black_box(
                    check_unbiasedness(&obj, &theta, 1e-3, &setup, Reference::Exact(&grad), 500, 50, 5, exec).unwrap(),
                )
            })
        });
    }
    g.finish();
}

criterion_group!(benches, variance, smoothed_gradient, unbiasedness);
criterion_main!(benches);
