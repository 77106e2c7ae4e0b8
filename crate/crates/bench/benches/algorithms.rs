use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lingtraits_core::align::hungarian;
use lingtraits_core::csr::CsrMatrix;
use lingtraits_core::factors::{fit_fa, FaOptions};
use lingtraits_core::fixture::{generate, FixtureConfig};
use lingtraits_core::nmfcluster::{fit_nmf, LikesMatrix, NmfOptions};
use lingtraits_core::predict::{auc, fit_ridge};
use lingtraits_core::utm::{build_matrix, select_vocabulary, standardize, VocabularyConfig};
use lingtraits_core::{FactorConfig, FittedPipeline};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

fn bench_hungarian(c: &mut Criterion) {
    let mut group = c.benchmark_group("hungarian");
    for n in [10, 40, 200] {
        let cost = uniform(n, n, n as u64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &cost, |b, cost| {
            b.iter(|| hungarian(black_box(cost)).unwrap())
        });
    }
    group.finish();
}

fn bench_factors(c: &mut Criterion) {
    let fx = generate(&FixtureConfig {
        users: 400,
        terms: 300,
        k: 5,
        tokens: 2000,
        ..Default::default()
    })
    .unwrap();
    let corpus = fx.corpus();
    let vocab_cfg = VocabularyConfig {
        max_terms: 10_000,
        ..Default::default()
    };
    let vocab = select_vocabulary(&corpus, &vocab_cfg).unwrap();
    let (matrix, _) = build_matrix(&corpus, &vocab).unwrap();
    let zm = standardize(&matrix, None).unwrap();

    let mut group = c.benchmark_group("factors");
    group.sample_size(10);
    group.bench_function("fa_fit_400x300_k5", |b| {
        b.iter(|| fit_fa(black_box(&zm), 5, &FaOptions::default()).unwrap())
    });
    let cfg = FactorConfig {
        k: 5,
        vocabulary: vocab_cfg.clone(),
        ..Default::default()
    };
    group.bench_function("pipeline_fit_400x300_k5", |b| {
        b.iter(|| FittedPipeline::fit(black_box(&corpus), &cfg).unwrap())
    });
    let (pipe, _) = FittedPipeline::fit(&corpus, &cfg).unwrap();
    group.bench_function("score_400", |b| b.iter(|| pipe.score_corpus(black_box(&corpus)).unwrap()));
    group.finish();

    let likes = LikesMatrix::from_events(&fx.likes, usize::MAX).unwrap();
    bench_nmf(c, &likes.matrix);
}

fn bench_nmf(c: &mut Criterion, v: &CsrMatrix) {
    let mut group = c.benchmark_group("nmf");
    group.sample_size(10);
    let opts = NmfOptions {
        rank: 5,
        iters: 100,
        seed: 0,
    };
    group.bench_function("rank5_100_iters", |b| b.iter(|| fit_nmf(black_box(v), &opts).unwrap()));
    group.finish();
}

fn bench_predict(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    // Coarse scores so midranks matter.
    let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 100.0).floor()).collect();
    c.bench_function("auc_10000", |b| b.iter(|| auc(black_box(&labels), black_box(&scores)).unwrap()));

    let x = uniform(2000, 20, 4);
    let y: Vec<f64> = (0..2000).map(|i| x.row(i).sum() + rng.random::<f64>()).collect();
    c.bench_function("ridge_2000x20", |b| b.iter(|| fit_ridge(black_box(&x), black_box(&y), 1.0).unwrap()));
}

criterion_group!(benches, bench_hungarian, bench_factors, bench_predict);
criterion_main!(benches);
