//! Graph neural network layers, the named architectures, training and
//! inductive prediction for newly arriving patients.

mod bundle;
mod inductive;
mod layers;
mod model;
mod spec;
mod train;

pub(crate) use bundle::{json_err, read_tensors, read_transforms, write_tensors, write_transforms};
pub use bundle::{ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use inductive::{InductiveOptions, NeighborLink, TriageVerdict};
pub use layers::{
    gatv2_forward, gatv2_forward_with_attention, gcn_forward, init_params, layer_forward, param_shapes, sage_aggregate,
    sage_forward, EdgeWeighting, GraphContext, GAT_NEGATIVE_SLOPE,
};
pub use model::{forward_vars, Model};
pub use spec::{preset_architectures, Activation, Aggregator, LayerKind, LayerSpec, ModelSpec, Preset};
pub use train::{train, EpochRecord, TrainConfig, TrainReport, Trained};

use crate::binio::FormatError;
use crate::ingest::IngestError;
use crate::numcore::NumError;
use crate::simgraph::GraphError;

#[cfg(test)]
mod tests;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GnnError {
    #[error("invalid model: {0}")]
    Spec(String),
    #[error("{0} mask is empty")]
    EmptyMask(&'static str),
    #[error("loss became non-finite at epoch {epoch} (lr {lr})")]
    NonFiniteLoss { epoch: usize, lr: f64 },
    #[error("features outside the fitted range: {}", .features.join(", "))]
    OutOfRange { features: Vec<String> },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Format(#[from] FormatError),
}
