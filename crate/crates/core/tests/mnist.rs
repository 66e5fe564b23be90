//! Needs the MNIST IDX files in `data/mnist` (see `scripts/fetch_mnist.py`)
//! or a directory named by `EXROUTE_MNIST_DIR`.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use exroute_core::data::{generate_synthetic, load_idx, prepare, RawData, SplitSpec, SyntheticSpec};
use exroute_core::eval::train_expert;
use exroute_core::nn::TrainConfig;
use exroute_core::preprocess::{Sample, SAMPLE_DIM};

fn mnist_dir() -> PathBuf {
    std::env::var_os("EXROUTE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn load_mnist() -> Vec<Sample> {
    let dir = mnist_dir();
    load_idx(
        dir.join("mnist-10k-images-idx3-ubyte.gz"),
        dir.join("mnist-10k-labels-idx1-ubyte.gz"),
    )
    .unwrap_or_else(|e| {
        panic!(
            "MNIST not found under {}: {e}; run scripts/fetch_mnist.py",
            dir.display()
        )
    })
}

/// Pixel noise with MNIST's overall mean and spread, clipped to `[0, 1]`.
fn pixel_noise(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<Sample> {
    let dist = Normal::new(mean, sd).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Sample::new((0..SAMPLE_DIM).map(|_| dist.sample(&mut rng).clamp(0.0, 1.0)).collect()).unwrap())
        .collect()
}

#[test]
fn mnist_file_shape() {
    let samples = load_mnist();
    assert_eq!(samples.len(), 10_000);
    assert!(samples.iter().all(|s| s.label().is_some_and(|l| l < 10)));
    let mut seen = [false; 10];
    samples.iter().for_each(|s| seen[s.label().unwrap() as usize] = true);
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn mnist_expert_separates_mnist_from_gaussian_samples() {
    let samples = load_mnist();
    let pixels: Vec<f64> = samples.iter().flat_map(|s| s.values().iter().copied()).collect();
    let mean = pixels.iter().sum::<f64>() / pixels.len() as f64;
    let sd = (pixels.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / pixels.len() as f64).sqrt();

    for seed in 0..5u64 {
        let set = prepare(
            "mnist",
            RawData::Images(samples.clone()),
            &SplitSpec::default().with_seed(seed),
        )
        .unwrap();
        assert_eq!(set.server().len(), 5000);
        let expert = train_expert(&set, &TrainConfig::default().with_seed(seed), false).unwrap();
        let ae = &expert.autoencoder;

        let held_out: Vec<Sample> = set.split.client_a.iter().chain(&set.split.client_b).cloned().collect();
        let own = ae.mean_reconstruction_loss(&held_out).unwrap();

        let noise = ae
            .mean_reconstruction_loss(&pixel_noise(2000, mean, sd, 100 + seed))
            .unwrap();
        let spec = SyntheticSpec::preset("gaussian", 2000, 200 + seed).unwrap();
        let gauss = prepare(
            "gauss",
            RawData::from_labeled(generate_synthetic(&spec).unwrap()).unwrap(),
            &SplitSpec::default(),
        )
        .unwrap();
        let standardized = ae.mean_reconstruction_loss(&gauss.split.client_a).unwrap();

        println!("seed {seed}: mnist {own:.5} pixel-noise {noise:.5} gaussian-proxy {standardized:.5}");
        assert!(own < noise, "seed {seed}: {own} vs pixel noise {noise}");
        assert!(
            own < standardized,
            "seed {seed}: {own} vs gaussian proxy {standardized}"
        );
    }
}
