//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use exroute_core::index::{
    compute_centroids, AutoencoderModel, ExpertEntry, Preprocessing, Registry, TrainFingerprint,
};
use exroute_core::nn::{Activation, Matrix};
use exroute_core::preprocess::{Sample, SAMPLE_DIM};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("shape matches data")
}

/// `n` samples with pixels uniform in `[0, 1]`, labelled round-robin over
/// `classes`.
pub fn random_samples(n: usize, classes: u32, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            Sample::new((0..SAMPLE_DIM).map(|_| rng.random_range(0.0..1.0)).collect())
                .expect("784 finite values")
                .with_label(i as u32 % classes)
        })
        .collect()
}

/// `k` untrained image experts with 10-class centroids.
pub fn random_registry(k: usize, seed: u64) -> Registry {
    let labeled = random_samples(100, 10, seed);
    Registry::from_entries((0..k).map(|i| {
        let autoencoder = AutoencoderModel::new(Activation::Sigmoid, seed + i as u64);
        ExpertEntry {
            expert_id: format!("expert-{i}"),
            display_name: String::new(),
            centroids: Some(compute_centroids(&autoencoder, &labeled).expect("labelled samples")),
            autoencoder,
            preprocessing: Preprocessing::image(),
            fingerprint: TrainFingerprint::default(),
        }
    }))
    .expect("distinct ids")
}
