use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use exroute_bench::{random_matrix, random_registry, random_samples};
use exroute_core::index::{
    registry_from_bytes, registry_to_bytes, samples_to_matrix, train_on_matrix, AutoencoderModel,
};
use exroute_core::matcher::{coarse_match, coarse_match_batch, hierarchical_match};
use exroute_core::nn::{Activation, Dense, Init, TrainConfig};
use exroute_core::preprocess::adaptive_avg_pool_1d;

fn dense(c: &mut Criterion) {
    let mut g = c.benchmark_group("dense_784x128");
    let x = random_matrix(128, 784, 1);
    let grad = random_matrix(128, 128, 2);
    let mut layer = Dense::new(784, 128, Init::HeUniform, &mut ChaCha8Rng::seed_from_u64(3));
    g.throughput(Throughput::Elements(128));
    g.bench_function("forward", |b| b.iter(|| layer.forward(black_box(&x)).unwrap()));
    layer.forward(&x).unwrap();
    g.bench_function("backward", |b| b.iter(|| layer.backward(black_box(&grad)).unwrap()));
    g.finish();
}

fn training_epoch(c: &mut Criterion) {
    let inputs = samples_to_matrix(&random_samples(1024, 1, 4)).unwrap();
    let config = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    let mut g = c.benchmark_group("autoencoder");
    g.sample_size(10);
    g.throughput(Throughput::Elements(1024));
    g.bench_function("one_epoch_1024_samples", |b| {
        b.iter_batched(
            || AutoencoderModel::new(Activation::Sigmoid, 5),
            |model| train_on_matrix(model, &inputs, &config).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn matching(c: &mut Criterion) {
    let registry = random_registry(4, 6);
    let samples = random_samples(256, 10, 7);
    let mut g = c.benchmark_group("match_k4");
    g.bench_function("coarse", |b| {
        b.iter(|| coarse_match(&registry, black_box(&samples[0])).unwrap())
    });
    g.bench_function("hierarchical", |b| {
        b.iter(|| hierarchical_match(&registry, black_box(&samples[0])).unwrap())
    });
    g.throughput(Throughput::Elements(samples.len() as u64));
    g.bench_function("coarse_batch_256", |b| {
        b.iter(|| coarse_match_batch(&registry, black_box(&samples)).unwrap())
    });
    g.finish();
}

fn pooling(c: &mut Criterion) {
    let har = random_matrix(1, 561, 8).into_vec();
    let reuters = random_matrix(1, 2000, 9).into_vec();
    let mut g = c.benchmark_group("pool_to_784");
    g.bench_function("from_561", |b| {
        b.iter(|| adaptive_avg_pool_1d(black_box(&har), 784).unwrap())
    });
    g.bench_function("from_2000", |b| {
        b.iter(|| adaptive_avg_pool_1d(black_box(&reuters), 784).unwrap())
    });
    g.finish();
}

fn registry_io(c: &mut Criterion) {
    let registry = random_registry(4, 10);
    let bytes = registry_to_bytes(&registry);
    let mut g = c.benchmark_group("registry_k4");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    g.bench_function("encode", |b| b.iter(|| registry_to_bytes(black_box(&registry))));
    g.bench_function("decode", |b| b.iter(|| registry_from_bytes(black_box(&bytes)).unwrap()));
    g.finish();
}

criterion_group!(benches, dense, training_epoch, matching, pooling, registry_io);
criterion_main!(benches);
