//! Dense `f64` tensors, a define-by-run reverse-mode tape, and Adam.

mod adam;
mod gradcheck;
mod graph;
pub mod losses;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_params, GRAD_FLOOR};
pub use graph::{Graph, Var};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension error in {kind}: input shapes {shapes:?}")]
    Dimension {
        kind: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{0} needs at least one input")]
    EmptyInput(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("expected {expected} gradients, got {got}")]
    ParamCount { expected: usize, got: usize },
}

#[cfg(test)]
mod tests;
