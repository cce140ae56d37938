//! Dense tensors and a reverse-mode differentiation tape.
//!
//! [`Tensor`] is a plain row-major buffer. [`Graph`] records operations over
//! tensors and replays them backwards to produce gradients. The free
//! functions in [`kernels`] are the shared arithmetic used both by graph ops
//! and by the incremental (KV-cached) decoder, so both paths produce
//! bit-identical rows.

mod graph;
pub mod kernels;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

/// Scalar type used by every tensor.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
/// Scalar type used by every tensor.
#[cfg(feature = "f32")]
pub type Real = f32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: dimension mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("masked_softmax: row {row} has no visible entry")]
    DegenerateRow { row: usize },
    #[error("max_pool: empty position set")]
    EmptyPositions,
    #[error("max_pool: position {pos} out of range for {rows} rows")]
    PositionOutOfRange { pos: usize, rows: usize },
    #[error("cross_entropy: every position is masked")]
    AllMasked,
    #[error("cross_entropy: target {target} out of range for vocabulary {vocab}")]
    TargetOutOfRange { target: usize, vocab: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward: node {node} consumes node {input} which is not recorded before it")]
    Cycle { node: usize, input: usize },
    #[error("backward: loss must be a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("layer_norm: eps must be positive")]
    BadEpsilon,
}

pub type Result<T> = std::result::Result<T, NumericsError>;
