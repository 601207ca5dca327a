use serde::{Deserialize, Serialize};

use crate::gnn::layers::GraphContext;
use crate::gnn::{GnnError, ModelBundle};
use crate::ingest::{PatientRecord, TriageLevel, CLASS_COUNT, FEATURE_NAMES};
use crate::numcore::{softmax_rows, Tensor};
use crate::simgraph::Orientation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborLink {
    pub node: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageVerdict {
    pub level: TriageLevel,
    /// Class probabilities in code order, Red first.
    pub scores: [f64; CLASS_COUNT],
    /// Closest graph neighbours of the inserted node, closest first.
    pub neighbors: Vec<NeighborLink>,
    /// Features that fell outside the fitted range and were clamped.
    pub clamped: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InductiveOptions {
    /// Clamp out-of-range features instead of rejecting the patient.
    pub allow_clamp: bool,
    pub max_neighbors: usize,
}

impl Default for InductiveOptions {
    fn default() -> Self {
        Self {
            allow_clamp: true,
            max_neighbors: 5,
        }
    }
}

impl ModelBundle {
    /// Maps a new patient into model space, inserts it into a private copy
    /// of the graph and classifies it with one forward pass.
    pub fn predict_inductive(
        &self,
        patient: &PatientRecord,
        opts: &InductiveOptions,
    ) -> Result<TriageVerdict, GnnError> {
        patient.validate()?;
        let encoded = self.encoder.encode_row(patient)?;
        let scaled = self.scaler.scale_row(&encoded)?;
        let clamped: Vec<String> = scaled.clamped.iter().map(|&c| FEATURE_NAMES[c].to_string()).collect();
        if !opts.allow_clamp && !clamped.is_empty() {
            return Err(GnnError::OutOfRange { features: clamped });
        }

        let (graph, id) = self.graph.insert_node(&scaled.values)?;
        let ctx = GraphContext::new(&graph, self.train_config.edge_weighting)?;
        let x = Tensor::from_vec(graph.node_count(), graph.dim(), graph.features().to_vec())?;
        let logits = self.model()?.logits(&ctx, &x)?;
        let row = Tensor::from_vec(1, logits.cols(), logits.row(id).to_vec())?;
        let probs = softmax_rows(&row);
        let level = TriageLevel::from_code(probs.argmax_rows()[0])
            .ok_or_else(|| GnnError::Spec(format!("model emits {} classes", probs.cols())))?;
        let mut scores = [0.0; CLASS_COUNT];
        scores.copy_from_slice(probs.row(0));

        let (ids, ws) = graph.neighbors(id);
        let mut neighbors: Vec<NeighborLink> = ids
            .iter()
            .zip(ws)
            .map(|(&node, &weight)| NeighborLink {
                node: node as usize,
                weight,
            })
            .collect();
        let closer_first = graph.metric().orientation() == Orientation::Similarity;
        neighbors.sort_by(|a, b| {
            let by_weight = if closer_first {
                b.weight.total_cmp(&a.weight)
            } else {
                a.weight.total_cmp(&b.weight)
            };
            by_weight.then(a.node.cmp(&b.node))
        });
        neighbors.truncate(opts.max_neighbors);
        Ok(TriageVerdict {
            level,
            scores,
            neighbors,
            clamped,
        })
    }
}
