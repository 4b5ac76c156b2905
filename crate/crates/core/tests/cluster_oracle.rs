mod common;

use claimpipe::cluster::{
    hdbscan_points, minimum_spanning_tree, mutual_reachability, HdbscanParams,
};
use common::*;

#[test]
fn blobs_match_reference_implementation() {
    let data = read_json("hdbscan_oracle.json");
    let (points, dim) = points_from_json(&data["blobs"]["points"]);
    let truth = labels_from_json(&data["blobs"]["truth"]);
    let reference = labels_from_json(&data["blobs"]["reference_labels"]);

    let assignment = hdbscan_points(&points, dim, &HdbscanParams::new(5)).unwrap();
    let ours: Vec<i64> = assignment.labels.iter().map(|&l| l as i64).collect();
    assert_eq!(assignment.n_clusters(), 3);
    assert!(adjusted_rand_index(&ours, &truth) >= 0.9);
    assert_eq!(adjusted_rand_index(&ours, &reference), 1.0);
}

#[test]
fn noisy_fixture_agrees_with_reference() {
    let data = read_json("hdbscan_oracle.json");
    let (points, dim) = points_from_json(&data["noisy"]["points"]);
    let reference = labels_from_json(&data["noisy"]["reference_labels"]);
    let assignment = hdbscan_points(&points, dim, &HdbscanParams::new(5)).unwrap();
    let ours: Vec<i64> = assignment.labels.iter().map(|&l| l as i64).collect();
    let ari = adjusted_rand_index(&ours, &reference);
    assert!(ari >= 0.99, "ARI vs reference = {ari}; ours = {ours:?}");
    for (label, &size) in assignment.sizes.iter().enumerate() {
        assert!(size >= 5);
        assert_eq!(ours.iter().filter(|&&l| l == label as i64).count(), size);
    }
}

#[test]
fn mst_matches_scipy_and_kruskal() {
    let data = read_json("hdbscan_oracle.json");
    let (points, dim) = points_from_json(&data["mst"]["points"]);
    let min_samples = data["mst"]["min_samples"].as_u64().unwrap() as usize;
    let expected: Vec<f64> = data["mst"]["edge_weights_sorted"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let n = points.len() / dim;
    let mr = mutual_reachability(&points, dim, min_samples);
    let mut ours: Vec<f64> = minimum_spanning_tree(&mr, n)
        .iter()
        .map(|e| e.weight)
        .collect();
    ours.sort_by(f64::total_cmp);
    assert_eq!(ours, brute_force_mst_weights(&mr, n));
    assert_eq!(ours.len(), expected.len());
    for (a, b) in ours.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
