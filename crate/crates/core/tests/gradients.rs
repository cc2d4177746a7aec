//! Finite-difference checks of every analytic gradient that training relies on.

#[path = "common/gradcheck.rs"]
mod gradcheck;

use gradcheck::{cross_entropy_errors, distillation_errors, triplet_errors, tsne_errors, SEEDS, TOLERANCE};

fn assert_all_below(errors: &[f64]) {
    assert_eq!(errors.len() as u64, SEEDS);
    for (seed, err) in errors.iter().enumerate() {
        assert!(*err < TOLERANCE, "seed {seed}: relative error {err}");
    }
}

#[test]
fn cross_entropy_through_classifier() {
    assert_all_below(&cross_entropy_errors());
}

#[test]
fn distillation_kl_through_student() {
    assert_all_below(&distillation_errors());
}

#[test]
fn triplet_hinge_through_shared_encoder() {
    let errors = triplet_errors();
    assert_all_below(&errors.iter().map(|e| e.0).collect::<Vec<_>>());
    for (seed, (_, split)) in errors.iter().enumerate() {
        assert!(*split < 1e-12, "seed {seed}: stacked and separate passes differ by {split}");
    }
}

#[test]
fn tsne_kl_gradient() {
    assert_all_below(&tsne_errors());
}
