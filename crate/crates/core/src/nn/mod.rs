//! Dense network engine: layers, hand-derived backpropagation, losses and SGD.

mod io;
mod layer;
mod loss;
mod model;
mod sgd;

pub use io::{load_model, model_to_bytes, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use layer::{Activation, DenseLayer};
pub use loss::{
    cross_entropy, cross_entropy_batch, distillation_batch, kl_divergence, log_softmax_t, softmax_t,
    squared_error_batch, LOG_CLAMP,
};
pub use model::{ForwardPass, Gradients, LayerGradient, MlpModel, TapPoint};
pub use sgd::{backward_and_step, train_step, Adam, Momentum, SgdConfig};
