use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gnn::GnnError;
use crate::ingest::{CLASS_COUNT, FEATURE_COUNT};
use crate::simgraph::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Max over neighbours of `relu(W_pool h_j + b_pool)`.
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Gcn,
    GatV2 {
        heads: usize,
        /// Concatenate head outputs; otherwise average them.
        concat: bool,
    },
    Sage {
        aggregator: Aggregator,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    /// Width of one attention head, for GATv2 layers.
    pub fn head_width(&self) -> Option<usize> {
        match self.kind {
            LayerKind::GatV2 { heads, concat: true } => Some(self.out_dim / heads),
            LayerKind::GatV2 { concat: false, .. } => Some(self.out_dim),
            _ => None,
        }
    }

    fn validate(&self, index: usize) -> Result<(), GnnError> {
        let bad = |msg: String| Err(GnnError::Spec(format!("layer {index}: {msg}")));
        if self.in_dim == 0 || self.out_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if let LayerKind::GatV2 { heads, concat } = self.kind {
            if heads == 0 {
                return bad("heads must be at least 1".into());
            }
            if concat && !self.out_dim.is_multiple_of(heads) {
                return bad(format!("out_dim {} not divisible by {heads} heads", self.out_dim));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "GCN_COS_MAN")]
    GcnCosMan,
    #[serde(rename = "GCN_EUC")]
    GcnEuc,
    #[serde(rename = "GAT")]
    Gat,
    #[serde(rename = "SAGE")]
    Sage,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::GcnCosMan, Preset::GcnEuc, Preset::Gat, Preset::Sage];

    pub fn name(self) -> &'static str {
        match self {
            Preset::GcnCosMan => "GCN_COS_MAN",
            Preset::GcnEuc => "GCN_EUC",
            Preset::Gat => "GAT",
            Preset::Sage => "SAGE",
        }
    }

    pub fn spec(self) -> ModelSpec {
        use Activation::{Identity, Relu};
        let layer = |kind, in_dim, out_dim, activation| LayerSpec {
            kind,
            in_dim,
            out_dim,
            activation,
        };
        let chain = |kinds: &[LayerKind], dims: &[usize]| -> Vec<LayerSpec> {
            kinds
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let act = if i + 1 == kinds.len() { Identity } else { Relu };
                    layer(k, dims[i], dims[i + 1], act)
                })
                .collect()
        };
        let layers = match self {
            Preset::GcnCosMan => chain(&[LayerKind::Gcn; 5], &[FEATURE_COUNT, 64, 64, 64, 64, CLASS_COUNT]),
            Preset::GcnEuc => chain(&[LayerKind::Gcn; 4], &[FEATURE_COUNT, 32, 32, 32, CLASS_COUNT]),
            Preset::Gat => chain(
                &[
                    LayerKind::GatV2 { heads: 4, concat: true },
                    LayerKind::GatV2 {
                        heads: 4,
                        concat: false,
                    },
                ],
                &[FEATURE_COUNT, 32, CLASS_COUNT],
            ),
            Preset::Sage => {
                let sage = |aggregator| LayerKind::Sage { aggregator };
                chain(
                    &[
                        sage(Aggregator::Max),
                        sage(Aggregator::Max),
                        sage(Aggregator::Mean),
                        sage(Aggregator::Max),
                        sage(Aggregator::Max),
                    ],
                    &[FEATURE_COUNT, 64, 32, 16, 8, CLASS_COUNT],
                )
            }
        };
        ModelSpec {
            preset: Some(self),
            layers,
        }
    }

    /// Epochs used when the training config leaves them unset: 200 for the
    /// GCN and GAT families on Euclidean graphs, 300 otherwise.
    pub fn default_epochs(self, metric: Metric) -> usize {
        match (self, metric) {
            (Preset::GcnCosMan | Preset::GcnEuc | Preset::Gat, Metric::Euclidean) => 200,
            _ => 300,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| format!("unknown preset {s:?}"))
    }
}

/// The four named architectures.
pub fn preset_architectures() -> [ModelSpec; 4] {
    Preset::ALL.map(Preset::spec)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub preset: Option<Preset>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn custom(layers: Vec<LayerSpec>) -> Self {
        Self { preset: None, layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        if self.layers.is_empty() {
            return Err(GnnError::Spec("model has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate(i)?;
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(GnnError::Spec(format!(
                    "layer {i} emits {} features but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(())
    }
}
