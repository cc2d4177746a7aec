//! Statistical checks of triplet sampling and forest recall.

#[path = "common/recall.rs"]
mod recall;

use dscope_core::rng::rng_from_seed;
use dscope_core::triplet::{sample_triplet, NeighborTable};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn positives_are_uniform_over_the_neighbour_list() {
    let k = 10;
    let n = 40;
    let lists: Vec<Vec<usize>> = (0..n).map(|i| (1..=k).map(|d| (i + d) % n).collect()).collect();
    let table = NeighborTable::from_lists(lists).unwrap();
    let draws = 100_000;
    let mut counts = vec![0usize; k];
    let mut rng = rng_from_seed(11);
    for _ in 0..draws {
        let t = sample_triplet(&table, 0, &mut rng).unwrap();
        counts[t.positive - 1] += 1;
        assert!(t.negative > k, "negative {} inside the neighbour set", t.negative);
    }
    let expected = draws as f64 / k as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}, counts {counts:?}");
}

#[test]
fn forest_recall_at_ten_on_uniform_cube() {
    let recall = recall::uniform_cube_recall(5);
    assert!(recall >= 0.90, "recall@10 = {recall}");
}
