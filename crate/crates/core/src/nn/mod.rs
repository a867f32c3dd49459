//! Dense networks with manual backpropagation and Adam.

mod adam;
pub mod checkpoint;
mod matrix;
mod mlp;
mod policy;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use mlp::{Activation, Gradients, Mlp, OutputActivation};
pub use policy::{gaussian_tanh_mode, gaussian_tanh_sample, SquashedSample};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("input has {got} features, network expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("shape mismatch: expected {expected} elements, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("backward called without a cached forward pass")]
    NoCachedForward,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
