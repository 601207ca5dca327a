//! Tabular baselines trained on the same preprocessed matrix as the GNNs.

mod bundle;
mod knn;
mod svm;

pub use bundle::{BaselineBundle, BaselineModel, BASELINE_MAGIC, BASELINE_VERSION};
pub use knn::{knn_predict, KnnConfig, KnnModel};
pub use svm::{svm_predict, svm_train, SvmConfig, SvmModel};

use crate::binio::FormatError;

#[cfg(test)]
mod tests;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("no training rows")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training data holds a single class")]
    SingleClass,
    #[error("weights became non-finite at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}
