use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

/// Named extraction point in a network, A (earliest) to E (latest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TapPoint {
    A,
    B,
    C,
    D,
    E,
}

impl TapPoint {
    pub const ALL: [TapPoint; 5] = [TapPoint::A, TapPoint::B, TapPoint::C, TapPoint::D, TapPoint::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::UnknownTap(i.to_string()))
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for TapPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for TapPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(TapPoint::A),
            "B" => Ok(TapPoint::B),
            "C" => Ok(TapPoint::C),
            "D" => Ok(TapPoint::D),
            "E" => Ok(TapPoint::E),
            _ => Err(Error::UnknownTap(s.to_string())),
        }
    }
}

/// Feed-forward stack of dense layers with up to five named tap points.
///
/// `taps[i]` is the index of the layer whose (post-activation) output is tap `i`;
/// the last tap is always the final layer, so for a classifier tap E is the logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    taps: Vec<usize>,
}

impl MlpModel {
    pub fn new(layers: Vec<DenseLayer>, taps: Vec<usize>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::LayerDimension {
                    layer: i + 1,
                    expected: pair[1].input_dim(),
                    got: pair[0].output_dim(),
                });
            }
        }
        if taps.is_empty() || taps.len() > TapPoint::ALL.len() {
            return Err(invalid(format!("{} tap points (1..=5 allowed)", taps.len())));
        }
        if taps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("tap points must be strictly increasing"));
        }
        if *taps.last().unwrap() != layers.len() - 1 {
            return Err(invalid("last tap point must be the final layer"));
        }
        Ok(Self { layers, taps })
    }

    /// Taps on the last `min(5, layers)` layers.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let n = layers.len();
        let taps = (n.saturating_sub(TapPoint::ALL.len())..n).collect();
        Self::new(layers, taps)
    }

    /// ReLU hidden blocks followed by a linear output block of width `classes`.
    pub fn classifier(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Self {
        Self::stack(input_dim, hidden, classes, Activation::Relu, seed)
    }

    /// Tanh hidden blocks followed by a linear output block (the Siamese encoder).
    pub fn encoder(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Self {
        Self::stack(input_dim, hidden, output_dim, Activation::Tanh, seed)
    }

    fn stack(input: usize, hidden: &[usize], output: usize, act: Activation, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input;
        for &h in hidden {
            layers.push(DenseLayer::glorot(width, h, act, &mut rng));
            width = h;
        }
        layers.push(DenseLayer::glorot(width, output, Activation::Identity, &mut rng));
        Self::from_layers(layers).expect("dimensions chain by construction")
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access to parameters. Shape changes are caught by `forward`.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    pub fn tap_layer(&self, tap: TapPoint) -> Result<usize> {
        self.taps
            .get(tap.index())
            .copied()
            .ok_or_else(|| Error::UnknownTap(tap.to_string()))
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardPass> {
        let mut outputs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = outputs.last().unwrap_or(batch);
            if input.cols() != layer.input_dim() {
                return Err(Error::LayerDimension {
                    layer: i,
                    expected: layer.input_dim(),
                    got: input.cols(),
                });
            }
            outputs.push(layer.forward(input));
        }
        Ok(ForwardPass { outputs })
    }

    /// Final-layer output only.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch)?.into_logits())
    }

    /// Parameter gradients for a loss whose gradient w.r.t. the final output is `loss_grad`.
    pub fn backward(&self, batch: &Matrix, pass: &ForwardPass, loss_grad: &Matrix) -> Result<Gradients> {
        let last = pass.logits();
        if loss_grad.shape() != last.shape() {
            return Err(Error::Shape(format!(
                "loss gradient {:?} does not match output {:?}",
                loss_grad.shape(),
                last.shape()
            )));
        }
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut upstream = loss_grad.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let out = &pass.outputs[l];
            let mut delta = upstream;
            for (d, &y) in delta.data_mut().iter_mut().zip(out.data()) {
                *d *= layer.activation.derivative_from_output(y);
            }
            let input = if l == 0 { batch } else { &pass.outputs[l - 1] };
            let weights = delta.matmul_tn(input)?;
            let mut bias = vec![0.0; layer.output_dim()];
            for row in delta.iter_rows() {
                for (b, d) in bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: l });
            }
            grads.push(LayerGradient { weights, bias });
            upstream = if l > 0 {
                delta.matmul(&layer.weights)?
            } else {
                Matrix::zeros(0, 0)
            };
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Plain gradient-descent update `theta -= lr * grad`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape("gradient layer count".into()));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            if g.weights.shape() != layer.weights.shape() || g.bias.len() != layer.bias.len() {
                return Err(Error::Shape("gradient shape".into()));
            }
            for (w, d) in layer.weights.data_mut().iter_mut().zip(g.weights.data()) {
                *w -= lr * d;
            }
            for (b, d) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        }
        Ok(())
    }
}

/// Every layer's post-activation output for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPass {
    outputs: Vec<Matrix>,
}

impl ForwardPass {
    pub fn layer_output(&self, layer: usize) -> &Matrix {
        &self.outputs[layer]
    }

    pub fn logits(&self) -> &Matrix {
        self.outputs.last().expect("at least one layer")
    }

    pub fn into_logits(mut self) -> Matrix {
        self.outputs.pop().expect("at least one layer")
    }

    /// One matrix per tap point of `model`, in tap order; the last one is the logits.
    pub fn taps<'a>(&'a self, model: &MlpModel) -> Vec<&'a Matrix> {
        model.taps.iter().map(|&l| &self.outputs[l]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .map(|g| g.bias.iter().fold(g.weights.max_abs(), |m, b| m.max(b.abs())))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weights: Matrix, bias: Vec<f64>, act: Activation) -> MlpModel {
        MlpModel::from_layers(vec![DenseLayer::new(weights, bias, act).unwrap()]).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let model = single(Matrix::identity(3), vec![0.0; 3], Activation::Identity);
        let x = Matrix::from_rows(&[[1.5, -2.0, 0.25], [0.0, 3.0, -1.0]]).unwrap();
        assert_eq!(model.predict(&x).unwrap(), x);
    }

    #[test]
    fn relu_zeroes_negative_inputs() {
        let model = single(Matrix::identity(2), vec![0.0; 2], Activation::Relu);
        let x = Matrix::from_rows(&[[-1.0, -0.5], [-3.0, -1e-9]]).unwrap();
        let y = model.predict(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_layer_matches_hand_product() {
        let model = MlpModel::classifier(2, &[3], 2, 0);
        let x = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let l0 = &model.layers()[0];
        let l1 = &model.layers()[1];
        // hand arithmetic over the seeded weights
        let hidden: Vec<f64> = (0..3)
            .map(|o| (l0.weights[(o, 0)] + l0.weights[(o, 1)] + l0.bias[o]).max(0.0))
            .collect();
        let expected: Vec<f64> = (0..2)
            .map(|o| (0..3).map(|h| l1.weights[(o, h)] * hidden[h]).sum::<f64>() + l1.bias[o])
            .collect();
        let y = model.predict(&x).unwrap();
        for (a, b) in y.row(0).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let model = MlpModel::classifier(4, &[3], 2, 0);
        let err = model.forward(&Matrix::zeros(1, 5)).unwrap_err();
        assert!(matches!(err, Error::LayerDimension { layer: 0, expected: 4, got: 5 }));

        let mut broken = model.clone();
        broken.layers_mut()[1].weights = Matrix::zeros(2, 7);
        broken.layers_mut()[1].bias = vec![0.0; 2];
        let err = broken.forward(&Matrix::zeros(1, 4)).unwrap_err();
        assert!(matches!(err, Error::LayerDimension { layer: 1, .. }));
    }

    #[test]
    fn tap_layout() {
        let model = MlpModel::classifier(8, &[6, 6, 6, 6], 3, 1);
        assert_eq!(model.taps(), &[0, 1, 2, 3, 4]);
        let pass = model.forward(&Matrix::zeros(2, 8)).unwrap();
        let taps = pass.taps(&model);
        assert_eq!(taps.len(), 5);
        assert_eq!(taps[4].cols(), 3);
        assert_eq!(model.tap_layer(TapPoint::E).unwrap(), 4);

        let small = MlpModel::encoder(4, &[3], 2, 0);
        assert_eq!(small.taps(), &[0, 1]);
        assert!(small.tap_layer(TapPoint::C).is_err());
    }

    #[test]
    fn invalid_tap_lists_rejected() {
        let layers = MlpModel::classifier(2, &[2, 2], 2, 0).layers().to_vec();
        assert!(MlpModel::new(layers.clone(), vec![1, 0, 2]).is_err());
        assert!(MlpModel::new(layers.clone(), vec![0, 1]).is_err());
        assert!(MlpModel::new(layers, vec![0, 2]).is_ok());
    }

    #[test]
    fn tap_point_parsing() {
        assert_eq!("c".parse::<TapPoint>().unwrap(), TapPoint::C);
        assert!("F".parse::<TapPoint>().is_err());
        assert_eq!(TapPoint::from_index(4).unwrap().to_string(), "E");
    }
}
