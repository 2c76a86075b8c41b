//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`tape::Tape`] records operations eagerly during the forward pass;
//! [`tape::Tape::backward`] walks the records in reverse and accumulates
//! adjoints. Everything is 64-bit and single-threaded per tape; distinct
//! tapes are independent.

pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use tape::{NodeId, Tape};
pub use tensor::TensorData;

#[derive(Debug, thiserror::Error)]
pub enum GradError {
    #[error("shape mismatch: {left:?} vs {right:?} in {op}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects {want}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        want: &'static str,
        got: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("index {index} out of bounds for {len} rows")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("optimizer state holds {state} tensors, step received {got}")]
    StateMismatch { state: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, GradError>;
