use exroute_core::nn::gradcheck::{check_all, GradCheck};

const SEEDS: u64 = 100;
const TOLERANCE: f64 = 1e-4;

#[test]
fn every_component_passes_finite_differences_for_100_seeds() {
    let mut worst: Option<(u64, GradCheck)> = None;
    let mut components = std::collections::BTreeSet::new();
    for seed in 0..SEEDS {
        for check in check_all(seed).unwrap() {
            assert!(check.entries > 0, "{} checked nothing", check.name);
            assert!(
                check.max_rel_err < TOLERANCE,
                "seed {seed}: {} rel err {:e}",
                check.name,
                check.max_rel_err
            );
            components.insert(check.name.clone());
            if worst.as_ref().is_none_or(|(_, w)| check.max_rel_err > w.max_rel_err) {
                worst = Some((seed, check));
            }
        }
    }
    for needed in [
        "dense",
        "batch norm",
        "relu",
        "sigmoid",
        "identity",
        "mse",
        "cross",
        "network",
    ] {
        assert!(
            components.iter().any(|c| c.to_lowercase().contains(needed)),
            "no check covers {needed}: {components:?}"
        );
    }
    let (seed, w) = worst.unwrap();
    println!("worst: seed {seed} {} {:e}", w.name, w.max_rel_err);
}
