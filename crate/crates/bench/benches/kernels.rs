use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sigmak::analysis::{mollify, volume_ratio};
use sigmak::radial::{default_radii, radial_envelope, EnvelopeMethod};
use sigmak::solver::{continuation_supercritical, newton_solve, ContinuationConfig, SolverConfig};
use sigmak::symfunc::{sigma, sigma_of_matrix, EigenTuple};
use sigmak_bench::{annulus_problem, bubble_grid, fold_problem, matrix, tuple};

fn symmetric_functions(c: &mut Criterion) {
    let mut g = c.benchmark_group("sigma");
    for n in [4, 8, 16] {
        let t = EigenTuple::new(tuple(n)).unwrap();
        g.bench_with_input(BenchmarkId::new("recurrence", n), &t, |b, t| b.iter(|| sigma(black_box(t), n / 2)));
    }
    for n in [4, 8] {
        let m = matrix(n);
        g.bench_with_input(BenchmarkId::new("of_matrix", n), &m, |b, m| b.iter(|| sigma_of_matrix(black_box(m), 2)));
    }
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solver");
    g.sample_size(20);
    let prob = annulus_problem();
    for n in [64, 256] {
        let cfg = SolverConfig::with_grid(n);
        g.bench_with_input(BenchmarkId::new("newton_annulus", n), &cfg, |b, cfg| {
            b.iter(|| newton_solve(black_box(&prob), cfg, None).unwrap())
        });
    }
    let fold = fold_problem();
    let cfg = ContinuationConfig::default();
    g.bench_function("continuation_fold", |b| b.iter(|| continuation_supercritical(black_box(&fold), &cfg).unwrap()));
    g.finish();
}

fn diagnostics(c: &mut Criterion) {
    let mut g = c.benchmark_group("diagnostics");
    g.sample_size(10);
    let f = bubble_grid(25, 0.08);
    let center = [0.0; 3];
    let radii = default_radii(&f, &center, EnvelopeMethod::Interpolated).unwrap();
    for method in [EnvelopeMethod::NodeMax, EnvelopeMethod::Interpolated] {
        g.bench_function(format!("envelope_{method:?}"), |b| {
            b.iter(|| radial_envelope(black_box(&f), &center, &radii, method).unwrap())
        });
    }
    let small = bubble_grid(13, 0.1);
    g.bench_function("mollify_13", |b| b.iter(|| mollify(black_box(&small), 0.2).unwrap()));
    let s: Vec<f64> = (1..=60).map(|i| 0.05 * i as f64).collect();
    g.bench_function("volume_ratio_sphere", |b| {
        b.iter(|| volume_ratio(3, |r| ((1.0 + r * r) / 2.0).ln(), black_box(&s)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, symmetric_functions, solvers, diagnostics);
criterion_main!(benches);
