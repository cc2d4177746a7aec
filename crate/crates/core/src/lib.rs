//! Desk-scale toolkit for studying how knowledge distillation reshapes a network's
//! representation spaces.
//!
//! The crate trains teacher and student MLPs with and without temperature-scaled
//! distillation, embeds per-layer activations in 2D with a triplet-loss Siamese encoder
//! (neighbors drawn from a random-projection forest) or exact t-SNE, and scores the
//! embeddings with convergence loss, superclass correlation and KDE class areas.

pub mod ann;
pub(crate) mod binio;
pub mod distill;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod triplet;
pub mod tsne;
pub mod viz;

pub use binio::write_atomic;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{MlpModel, SgdConfig, TapPoint};
