//! Dense networks with exact reverse-mode gradients, Adam, and target blending.

mod adam;
mod mlp;

use thiserror::Error;

pub use adam::Adam;
pub use mlp::{polyak_update, Activation, Dense, ForwardCache, Gradients, Matrix, Mlp};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
}
