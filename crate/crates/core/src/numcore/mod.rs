//! Dense/sparse numeric kernel with a reverse-mode tape.
//!
//! The tape records each primitive together with the data its backward rule
//! needs. Layers in [`crate::gnn`] are composed purely from these primitives,
//! and [`grad_check_params`] compares the tape against central differences.

mod adam;
mod gradcheck;
mod sparse;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_params, GradCheck, RELATIVE_ERROR_FLOOR};
pub use sparse::SparseMatrix;
pub use tape::{matmul, softmax_rows, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty reduction: {0}")]
    EmptyReduction(&'static str),
    #[error("backward already ran on this tape; call reset first")]
    BackwardTwice,
    #[error("loss must be 1x1, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("label error: {0}")]
    Label(String),
}
