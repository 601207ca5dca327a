use serde::{Deserialize, Serialize};

use triage_core::gnn::{NeighborLink, TriageVerdict};
use triage_core::ingest::TriageLevel;

/// Class probabilities keyed by level name, most urgent first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(rename = "Red")]
    pub red: f64,
    #[serde(rename = "Orange")]
    pub orange: f64,
    #[serde(rename = "Yellow")]
    pub yellow: f64,
    #[serde(rename = "Green")]
    pub green: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    /// Row index of the training patient in the bundled graph.
    pub index: usize,
    pub weight: f64,
}

/// Verdict as served: the model's answer plus the configuration it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub level: TriageLevel,
    pub scores: Scores,
    pub neighbors: Vec<Neighbor>,
    pub clamped: Vec<String>,
    pub config_hash: String,
}

impl Verdict {
    pub fn new(v: TriageVerdict, config_hash: &str) -> Self {
        let [red, orange, yellow, green] = v.scores;
        Self {
            level: v.level,
            scores: Scores {
                red,
                orange,
                yellow,
                green,
            },
            neighbors: v
                .neighbors
                .into_iter()
                .map(|NeighborLink { node, weight }| Neighbor { index: node, weight })
                .collect(),
            clamped: v.clamped,
            config_hash: config_hash.to_string(),
        }
    }
}
