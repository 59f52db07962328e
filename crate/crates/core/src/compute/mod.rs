//! Dense tensors and a tape-based reverse-mode differentiator covering the
//! handful of primitives the classifier and the explainers need.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use tape::{elu, sigmoid, Gradients, Tape, Var, PROB_CLAMP};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("segment ids must be non-decreasing")]
    UnsortedSegments,
    #[error("loss mask selects no entries")]
    EmptyMask,
    #[error("reduction over an empty axis")]
    EmptyReduction,
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
