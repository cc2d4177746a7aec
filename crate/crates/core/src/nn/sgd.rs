use serde::{Deserialize, Serialize};

use super::model::{Gradients, MlpModel};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// Mini-batch SGD with step decay: `lr(e) = initial_lr * decay_factor^(e / decay_every)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub initial_lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.1,
            decay_every: 60,
            decay_factor: 0.2,
            batch_size: 64,
            epochs: 150,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(invalid("initial_lr must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(invalid("decay_factor must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if self.decay_every == 0 {
            return Err(invalid("decay_every must be at least 1"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.initial_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Backpropagates `loss_grad` (gradient w.r.t. the final output) and applies one SGD step at
/// the learning rate scheduled for `epoch`.
pub fn backward_and_step(
    model: &mut MlpModel,
    batch: &Matrix,
    loss_grad: &Matrix,
    config: &SgdConfig,
    epoch: usize,
) -> Result<()> {
    let pass = model.forward(batch)?;
    let grads = model.backward(batch, &pass, loss_grad)?;
    model.apply_gradients(&grads, config.lr_at(epoch))
}

/// Forward, loss, backward and update in one call. `loss` maps the final output to
/// `(value, gradient)`. Returns the loss before the update.
pub fn train_step<F>(model: &mut MlpModel, batch: &Matrix, lr: f64, loss: F) -> Result<f64>
where
    F: FnOnce(&Matrix) -> Result<(f64, Matrix)>,
{
    let pass = model.forward(batch)?;
    let (value, grad) = loss(pass.logits())?;
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    let grads = model.backward(batch, &pass, &grad)?;
    model.apply_gradients(&grads, lr)?;
    Ok(value)
}

/// Heavy-ball velocity buffers: `v = mu * v - lr * g; theta += v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Momentum {
    mu: f64,
    velocity: Vec<(Matrix, Vec<f64>)>,
}

impl Momentum {
    pub fn new(model: &MlpModel, mu: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {mu}")));
        }
        let velocity = model
            .layers()
            .iter()
            .map(|l| (Matrix::zeros(l.output_dim(), l.input_dim()), vec![0.0; l.output_dim()]))
            .collect();
        Ok(Self { mu, velocity })
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.velocity.len() {
            return Err(Error::Shape("gradient layer count".into()));
        }
        for ((layer, g), (vw, vb)) in model
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.velocity)
        {
            if g.weights.shape() != vw.shape() || layer.weights.shape() != vw.shape() {
                return Err(Error::Shape("gradient shape".into()));
            }
            for ((w, v), d) in layer.weights.data_mut().iter_mut().zip(vw.data_mut()).zip(g.weights.data()) {
                *v = self.mu * *v - lr * d;
                *w += *v;
            }
            for ((b, v), d) in layer.bias.iter_mut().zip(vb.iter_mut()).zip(&g.bias) {
                *v = self.mu * *v - lr * d;
                *b += *v;
            }
        }
        Ok(())
    }
}

/// Adam with bias correction (`beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`).
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    t: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(model: &MlpModel) -> Self {
        let sizes: Vec<usize> = model.layers().iter().map(|l| l.parameter_count()).collect();
        Self {
            t: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.first.len() {
            return Err(Error::Shape("gradient layer count".into()));
        }
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (l, (layer, g)) in model.layers_mut().iter_mut().zip(&grads.layers).enumerate() {
            if g.weights.shape() != layer.weights.shape() || g.bias.len() != layer.bias.len() {
                return Err(Error::Shape("gradient shape".into()));
            }
            let params = layer.weights.data_mut().iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.data().iter().chain(&g.bias);
            for (((w, d), m), v) in params.zip(gs).zip(&mut self.first[l]).zip(&mut self.second[l]) {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * d;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * d * d;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
        Ok(())
    }
}
