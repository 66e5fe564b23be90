use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use exroute_core::data::{generate_synthetic, prepare, PreparedDataset, RawData, SplitSpec, SyntheticSpec};
use exroute_core::eval::{
    eval_coarse, eval_dataset_id, eval_end_to_end, eval_fine, train_expert, train_experts, train_mlp_baseline,
    DatasetClassifier,
};
use exroute_core::index::{compute_centroids, Registry};
use exroute_core::matcher::coarse_match;
use exroute_core::nn::TrainConfig;
use exroute_core::Error;

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 6,
        decay_every: 3,
        batch_size: 64,
        ..TrainConfig::default()
    }
}

fn dataset(name: &str, preset: &str, seed: u64) -> PreparedDataset {
    let spec = SyntheticSpec::preset(preset, 800, seed).unwrap();
    let raw = RawData::from_labeled(generate_synthetic(&spec).unwrap()).unwrap();
    prepare(name, raw, &SplitSpec::default()).unwrap()
}

fn fixture() -> &'static (Vec<PreparedDataset>, Registry) {
    static FIXTURE: OnceLock<(Vec<PreparedDataset>, Registry)> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let sets = vec![
            dataset("gauss", "gaussian", 1),
            dataset("har", "har", 2),
            dataset("stl", "stl10", 3),
        ];
        let registry = train_experts(&sets, &quick(), true).unwrap();
        (sets, registry)
    })
}

#[test]
fn harness_agrees_with_per_sample_matching() {
    let (sets, registry) = fixture();
    let table = eval_coarse(registry, sets).unwrap();
    for (set, row) in sets.iter().zip(&table) {
        assert_eq!(row.dataset, set.name);
        for (samples, tally) in [(&set.split.client_a, row.client_a), (&set.split.client_b, row.client_b)] {
            let own = registry.position(&set.name).unwrap();
            let correct = samples
                .iter()
                .filter(|s| coarse_match(registry, s).unwrap().coarse_index == own)
                .count();
            assert_eq!((tally.correct, tally.total), (correct, samples.len()));
        }
    }
}

#[test]
fn separated_proxies_route_perfectly_on_training_data() {
    let (sets, registry) = fixture();
    let own: Vec<PreparedDataset> = sets
        .iter()
        .map(|s| {
            let mut d = s.clone();
            d.split.client_a = s.split.server.clone();
            d.split.client_b = s.split.server.clone();
            d
        })
        .collect();
    for row in eval_coarse(registry, &own).unwrap() {
        assert_eq!(row.client_a.percent(), 100.0, "{}", row.dataset);
    }
}

#[test]
fn each_dataset_is_reconstructed_best_by_its_own_expert() {
    let (sets, registry) = fixture();
    for (j, set) in sets.iter().enumerate() {
        let losses: Vec<f64> = registry
            .iter()
            .map(|e| e.autoencoder.mean_reconstruction_loss(set.server()).unwrap())
            .collect();
        let own = registry.position(&set.name).unwrap();
        assert_eq!(own, j);
        for (k, l) in losses.iter().enumerate() {
            if k != own {
                assert!(losses[own] < *l, "{} data, expert {}: {losses:?}", set.name, k);
            }
        }
    }
}

#[test]
fn single_expert_registry_is_always_right() {
    let (sets, registry) = fixture();
    let one = Registry::from_entries([registry.get(0).unwrap().clone()]).unwrap();
    let row = &eval_coarse(&one, &sets[..1]).unwrap()[0];
    assert_eq!((row.client_a.percent(), row.client_b.percent()), (100.0, 100.0));
    assert!(matches!(eval_coarse(&one, &sets[1..2]), Err(Error::UnknownExpert(_))));
}

#[test]
fn fine_assignment_sanity_bounds() {
    let (sets, registry) = fixture();
    let set = &sets[0];
    let mut entry = registry.by_id(&set.name).unwrap().clone();

    let mut firsts = Vec::new();
    for s in set.server() {
        if !firsts
            .iter()
            .any(|f: &exroute_core::preprocess::Sample| f.label() == s.label())
        {
            firsts.push(s.clone());
        }
    }
    let full = entry.centroids.take();
    entry.centroids = Some(compute_centroids(&entry.autoencoder, &firsts).unwrap());
    let own = eval_fine(&entry, &firsts).unwrap();
    assert_eq!(own.tally.percent(), 100.0);

    entry.centroids = full;
    let classes = entry.centroids.as_ref().unwrap().len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut chance = 0.0;
    let rounds = 10;
    for _ in 0..rounds {
        let mut labels: Vec<u32> = set.split.client_a.iter().map(|s| s.label().unwrap()).collect();
        labels.shuffle(&mut rng);
        let shuffled: Vec<_> = set
            .split
            .client_a
            .iter()
            .zip(labels)
            .map(|(s, l)| s.clone().with_label(l))
            .collect();
        chance += eval_fine(&entry, &shuffled).unwrap().tally.percent() / rounds as f64;
    }
    assert!(
        (chance - 100.0 / classes).abs() < 5.0,
        "shuffled-label accuracy {chance}"
    );

    let bad = vec![set.split.client_a[0].clone().with_label(99)];
    assert!(eval_fine(&entry, &bad).is_err());
}

#[test]
fn end_to_end_never_beats_fine_with_true_expert() {
    let (sets, registry) = fixture();
    for set in sets {
        let e2e = eval_end_to_end(registry, set).unwrap();
        let fine = eval_fine(registry.by_id(&set.name).unwrap(), &set.split.client_a).unwrap();
        assert!(e2e.client_a.correct <= fine.tally.correct);
    }
}

#[test]
fn mlp_baseline_on_separable_pair() {
    let sets = [dataset("gauss", "gaussian", 7), dataset("stl", "stl10", 8)];
    let config = TrainConfig { seed: 4, ..quick() };
    let a = train_mlp_baseline(&sets, &config).unwrap();
    let b = train_mlp_baseline(&sets, &config).unwrap();
    let rows = eval_dataset_id(&a, &sets).unwrap();
    for row in &rows {
        assert!(
            row.client_a.percent() >= 99.9 && row.client_b.percent() >= 99.9,
            "{row:?}"
        );
    }
    let probe = &sets[0].split.client_a;
    assert_eq!(
        a.logits(probe).unwrap().data(),
        b.logits(probe).unwrap().data(),
        "same seed must give identical classifiers"
    );
    assert!(DatasetClassifier::new(vec!["only".into()], 0).is_err());
    assert!(train_mlp_baseline(&sets[..1], &config).is_err());
}

#[test]
fn training_is_reproducible() {
    let set = dataset("gauss", "gaussian", 11);
    let a = train_expert(&set, &quick(), true).unwrap();
    let b = train_expert(&set, &quick(), true).unwrap();
    let probe = &set.split.client_b[0];
    assert_eq!(
        a.autoencoder.reconstruction_loss(probe).unwrap().to_bits(),
        b.autoencoder.reconstruction_loss(probe).unwrap().to_bits()
    );
    assert_eq!(a.centroids, b.centroids);
}
