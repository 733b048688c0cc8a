use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delta_core::losses::{equalization_loss, supervised_contrastive_loss};
use delta_core::numeric::{l2_normalize_rows, matmul, matmul_nt};
use delta_core::{ClassPrior, ContrastiveConfig, LabeledVector, RealMatrix, ReplayBuffer};

fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    RealMatrix::from_vec(rows, cols, data).unwrap()
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [32, 64, 128] {
        let a = random(n, n, 1);
        let b = random(n, n, 2);
        group.bench_with_input(BenchmarkId::new("ab", n), &n, |bench, _| {
            bench.iter(|| matmul(black_box(&a), black_box(&b)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("abt", n), &n, |bench, _| {
            bench.iter(|| matmul_nt(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn bench_losses(c: &mut Criterion) {
    let mut group = c.benchmark_group("losses");
    // |G_t| for a 16-sample batch at pairing counts 1 and 10
    for n in [64, 352] {
        let v = l2_normalize_rows(&random(n, 128, 3), 1e-12);
        let labels: Vec<usize> = (0..n).map(|i| i % 20).collect();
        let cfg = ContrastiveConfig::default();
        group.bench_with_input(BenchmarkId::new("contrastive", n), &n, |bench, _| {
            bench.iter(|| supervised_contrastive_loss(black_box(&v), &labels, &cfg).unwrap())
        });
        let logits = random(n, 20, 4);
        let mut prior = ClassPrior::new();
        prior.update(0, &labels);
        group.bench_with_input(BenchmarkId::new("equalization", n), &n, |bench, _| {
            bench.iter(|| equalization_loss(black_box(&logits), &labels, &prior).unwrap())
        });
    }
    group.finish();
}

fn bench_reservoir(c: &mut Criterion) {
    let batch: Vec<LabeledVector> = (0..16)
        .map(|i| LabeledVector::new(vec![i as f64; 32], i % 4))
        .collect();
    c.bench_function("reservoir_update_16", |bench| {
        let mut buf = ReplayBuffer::new(200, 0).unwrap();
        bench.iter(|| buf.reservoir_update(black_box(&batch)))
    });
    c.bench_function("random_retrieve_160", |bench| {
        let mut buf = ReplayBuffer::new(200, 0).unwrap();
        for _ in 0..20 {
            buf.reservoir_update(&batch);
        }
        bench.iter(|| buf.random_retrieve(black_box(160)))
    });
}

criterion_group!(benches, bench_matmul, bench_losses, bench_reservoir);
criterion_main!(benches);
