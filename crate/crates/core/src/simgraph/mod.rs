//! Patient-similarity graphs under a metric and a strict threshold rule.

mod graph;
mod metric;

pub use graph::{build_graph, mean_pairwise, mean_pairwise_rows, SimilarityGraph, Threshold, ThresholdSource};
pub use metric::{cosine_similarity, euclidean_distance, manhattan_distance, Metric, Orientation};

use crate::binio::FormatError;

#[cfg(test)]
mod tests;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("zero feature vector{} has no cosine similarity", .node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    ZeroVector { node: Option<usize> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid {metric} threshold {value}: {reason}")]
    InvalidThreshold {
        metric: Metric,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid graph structure: {0}")]
    Structure(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}
