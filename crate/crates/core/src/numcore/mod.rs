//! Dense tensors, reverse-mode differentiation and the Adam optimiser.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{finite_diff_check, REL_ERR_FLOOR};
pub use tape::{sigmoid, softmax_axis, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("softmax axis {axis} out of range for a matrix")]
    Axis { axis: usize },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("{op} of an empty tensor")]
    Empty { op: &'static str },
    #[error("loss must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward already run on this tape; reset it first")]
    BackwardTwice,
    #[error("tape is not topologically ordered")]
    CyclicTape,
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("optimiser tracks {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("finite-difference step must be positive, got {h}")]
    InvalidStep { h: f64 },
}

impl NumError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        NumError::Shape { op, left: left.to_vec(), right: right.to_vec() }
    }
}
