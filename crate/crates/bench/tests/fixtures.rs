use exroute_bench::{random_matrix, random_registry, random_samples};

#[test]
fn fixtures_are_seeded() {
    assert_eq!(random_matrix(3, 4, 1), random_matrix(3, 4, 1));
    assert_ne!(random_matrix(3, 4, 1), random_matrix(3, 4, 2));
    let s = random_samples(12, 5, 0);
    assert_eq!(s[7].label(), Some(2));
    assert_eq!(s, random_samples(12, 5, 0));
}

#[test]
fn registry_fixture_is_matchable() {
    let reg = random_registry(3, 4);
    assert_eq!(reg.len(), 3);
    assert!(reg.iter().all(|e| e.centroids.as_ref().is_some_and(|c| c.len() == 10)));
    assert!(reg.iter().all(|e| e.validate().is_ok()));
}
