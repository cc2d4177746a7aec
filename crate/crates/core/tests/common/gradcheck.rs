//! Central finite-difference oracles for every analytic gradient that training relies on.
//! Each check returns the relative error per seed.

use dscope_core::nn::{cross_entropy_batch, distillation_batch, Gradients};
use dscope_core::rng::{derive_seed, rng_from_seed};
use dscope_core::triplet::triplet_batch_loss;
use dscope_core::tsne::{joint_probabilities, kl_and_gradient};
use dscope_core::{Matrix, MlpModel};
use rand::Rng as _;

pub const SEEDS: u64 = 20;
pub const TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn uniform(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn flatten(grads: &Gradients) -> Vec<f64> {
    grads
        .layers
        .iter()
        .flat_map(|l| l.weights.data().iter().chain(&l.bias).copied())
        .collect()
}

/// Random biases keep ReLU pre-activations off the kink at exactly zero, which a
/// zero-initialised bias hits whenever a whole previous layer is inactive.
fn with_random_biases(mut model: MlpModel, seed: u64) -> MlpModel {
    let mut rng = rng_from_seed(seed);
    for layer in model.layers_mut() {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    model
}

fn param_mut(model: &mut MlpModel, layer: usize, i: usize) -> &mut f64 {
    let layer = &mut model.layers_mut()[layer];
    let n_weights = layer.weights.data().len();
    if i < n_weights {
        &mut layer.weights.data_mut()[i]
    } else {
        &mut layer.bias[i - n_weights]
    }
}

/// Central differences of `loss` over every weight and bias, in the order of `flatten`.
fn numeric_gradient(model: &MlpModel, loss: impl Fn(&MlpModel) -> f64) -> Vec<f64> {
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        for i in 0..layer.weights.data().len() + layer.bias.len() {
            let orig = *param_mut(&mut probe, l, i);
            *param_mut(&mut probe, l, i) = orig + STEP;
            let up = loss(&probe);
            *param_mut(&mut probe, l, i) = orig - STEP;
            let down = loss(&probe);
            *param_mut(&mut probe, l, i) = orig;
            out.push((up - down) / (2.0 * STEP));
        }
    }
    out
}

pub fn cross_entropy_errors() -> Vec<f64> {
    (0..SEEDS)
        .map(|seed| {
            let model = with_random_biases(MlpModel::classifier(5, &[6, 6], 4, derive_seed(seed, &[1])), derive_seed(seed, &[1, 1]));
            let batch = uniform(7, 5, derive_seed(seed, &[2]));
            let labels: Vec<usize> = (0..7).map(|i| (i + seed as usize) % 4).collect();
            let loss = |m: &MlpModel| cross_entropy_batch(m.forward(&batch).unwrap().logits(), &labels).unwrap().0;
            let pass = model.forward(&batch).unwrap();
            let (_, grad) = cross_entropy_batch(pass.logits(), &labels).unwrap();
            let analytic = flatten(&model.backward(&batch, &pass, &grad).unwrap());
            relative_error(&analytic, &numeric_gradient(&model, loss))
        })
        .collect()
}

/// Temperatures cycle through 1..=5.
pub fn distillation_errors() -> Vec<f64> {
    (0..SEEDS)
        .map(|seed| {
            let model = with_random_biases(MlpModel::classifier(5, &[6, 6], 4, derive_seed(seed, &[3])), derive_seed(seed, &[3, 1]));
            let batch = uniform(7, 5, derive_seed(seed, &[4]));
            let mut teacher = uniform(7, 4, derive_seed(seed, &[5]));
            teacher.scale(3.0);
            let t = 1.0 + (seed % 5) as f64;
            let loss =
                |m: &MlpModel| distillation_batch(m.forward(&batch).unwrap().logits(), &teacher, t, false).unwrap().0;
            let pass = model.forward(&batch).unwrap();
            let (_, grad) = distillation_batch(pass.logits(), &teacher, t, false).unwrap();
            let analytic = flatten(&model.backward(&batch, &pass, &grad).unwrap());
            relative_error(&analytic, &numeric_gradient(&model, loss))
        })
        .collect()
}

/// Per seed: relative error of the stacked-batch gradient, and the largest deviation between
/// it and the sum of three separate passes through the same weights. The margin keeps
/// every hinge active.
pub fn triplet_errors() -> Vec<(f64, f64)> {
    let b = 6;
    let margin = 100.0;
    (0..SEEDS)
        .map(|seed| {
            let model = MlpModel::encoder(5, &[8, 8], 2, derive_seed(seed, &[6]));
            let legs: Vec<Matrix> = (0..3).map(|k| uniform(b, 5, derive_seed(seed, &[7, k]))).collect();
            let stacked = Matrix::vstack(&[&legs[0], &legs[1], &legs[2]]).unwrap();
            let loss = |m: &MlpModel| triplet_batch_loss(m.forward(&stacked).unwrap().logits(), margin).unwrap().0;
            let pass = model.forward(&stacked).unwrap();
            let (_, grad) = triplet_batch_loss(pass.logits(), margin).unwrap();
            let analytic = flatten(&model.backward(&stacked, &pass, &grad).unwrap());
            let err = relative_error(&analytic, &numeric_gradient(&model, loss));

            let mut summed = vec![0.0; analytic.len()];
            for (k, leg) in legs.iter().enumerate() {
                let leg_pass = model.forward(leg).unwrap();
                let rows: Vec<usize> = (k * b..(k + 1) * b).collect();
                let leg_grad = model.backward(leg, &leg_pass, &grad.select_rows(&rows)).unwrap();
                for (s, g) in summed.iter_mut().zip(flatten(&leg_grad)) {
                    *s += g;
                }
            }
            let split = summed
                .iter()
                .zip(&analytic)
                .map(|(s, a)| (s - a).abs() / (1.0 + a.abs()))
                .fold(0.0, f64::max);
            (err, split)
        })
        .collect()
}

pub fn tsne_errors() -> Vec<f64> {
    (0..SEEDS)
        .map(|seed| {
            let x = uniform(10, 4, derive_seed(seed, &[8]));
            let p = joint_probabilities(&x, 3.0).unwrap();
            let y = uniform(10, 2, derive_seed(seed, &[9]));
            let (_, analytic) = kl_and_gradient(&p, &y).unwrap();
            let mut probe = y.clone();
            let mut numeric = Vec::with_capacity(y.data().len());
            for i in 0..y.data().len() {
                let orig = probe.data()[i];
                probe.data_mut()[i] = orig + STEP;
                let up = kl_and_gradient(&p, &probe).unwrap().0;
                probe.data_mut()[i] = orig - STEP;
                let down = kl_and_gradient(&p, &probe).unwrap().0;
                probe.data_mut()[i] = orig;
                numeric.push((up - down) / (2.0 * STEP));
            }
            relative_error(analytic.data(), &numeric)
        })
        .collect()
}
