//! Convolutional network engine: layer kernels, the model and its gradients.

pub mod layers;
mod model;

pub use layers::Padding;
pub use model::{ForwardPass, Gradients, LayerParams, LayerSpec, Model};
