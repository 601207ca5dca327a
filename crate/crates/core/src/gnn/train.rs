use serde::{Deserialize, Serialize};

use crate::gnn::layers::{EdgeWeighting, GraphContext};
use crate::gnn::{GnnError, Model, ModelSpec};
use crate::ingest::SplitMasks;
use crate::numcore::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::scalar::Real;
use crate::simgraph::SimilarityGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Unset means the preset default for the graph's metric.
    pub epochs: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
    pub edge_weighting: EdgeWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: None,
            adam: AdamConfig::default(),
            seed: 0,
            edge_weighting: EdgeWeighting::Affinity,
        }
    }
}

impl TrainConfig {
    pub fn resolve_epochs(&self, spec: &ModelSpec, graph_metric: crate::simgraph::Metric) -> usize {
        self.epochs
            .or_else(|| spec.preset.map(|p| p.default_epochs(graph_metric)))
            .unwrap_or(300)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// `None` when the evaluation mask is empty.
    pub eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept as best (evaluation accuracy, then
    /// training accuracy, first occurrence wins).
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.train_loss).collect()
    }

    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained<T: Real = f64> {
    /// Weights of the best epoch.
    pub best: Model<T>,
    /// Weights after the final update.
    pub last: Model<T>,
    pub report: TrainReport,
}

fn accuracy(pred: &[usize], labels: &[usize], rows: &[usize]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let hits = rows.iter().filter(|&&r| pred[r] == labels[r]).count();
    Some(hits as f64 / rows.len() as f64)
}

/// Full-batch transductive training with cross-entropy on the training mask.
pub fn train<T: Real>(
    spec: &ModelSpec,
    graph: &SimilarityGraph<T>,
    labels: &[usize],
    masks: &SplitMasks,
    cfg: &TrainConfig,
) -> Result<Trained<T>, GnnError> {
    spec.validate()?;
    let n = graph.node_count();
    if labels.len() != n {
        return Err(GnnError::Spec(format!("{} labels for {n} nodes", labels.len())));
    }
    if spec.in_dim() != graph.dim() {
        return Err(GnnError::Spec(format!(
            "model expects {} features, graph has {}",
            spec.in_dim(),
            graph.dim()
        )));
    }
    if masks.train.is_empty() {
        return Err(GnnError::EmptyMask("train"));
    }
    if let Some(&bad) = masks.train.iter().chain(&masks.eval).find(|&&r| r >= n) {
        return Err(GnnError::Spec(format!("mask row {bad} outside {n} nodes")));
    }
    let epochs = cfg.resolve_epochs(spec, graph.metric());
    if epochs == 0 {
        return Err(GnnError::Spec("epochs must be positive".into()));
    }

    let ctx = GraphContext::new(graph, cfg.edge_weighting)?;
    let features = Tensor::from_vec(n, graph.dim(), graph.features().to_vec())?;
    let mut model = Model::new(spec.clone(), cfg.seed)?;
    let mut state = AdamState::new(model.params());
    let mut history = Vec::with_capacity(epochs);
    let mut best: Option<(Model<T>, (f64, f64), usize)> = None;

    for epoch in 0..epochs {
        let mut tape = Tape::new();
        let (logits, vars) = model.record(&mut tape, &ctx, &features)?;
        let loss = tape.cross_entropy(logits, labels, &masks.train)?;
        let loss_value = tape.value(loss).get(0, 0).as_f64();
        if !loss_value.is_finite() {
            return Err(GnnError::NonFiniteLoss { epoch, lr: cfg.adam.lr });
        }
        let pred = tape.value(logits).argmax_rows();
        let record = EpochRecord {
            epoch,
            train_loss: loss_value,
            train_accuracy: accuracy(&pred, labels, &masks.train).unwrap(),
            eval_accuracy: accuracy(&pred, labels, &masks.eval),
        };
        let key = (record.eval_accuracy.unwrap_or(0.0), record.train_accuracy);
        if best.as_ref().is_none_or(|(_, k, _)| key > *k) {
            best = Some((model.clone(), key, epoch));
        }
        history.push(record);

        tape.backward(loss)?;
        let grads: Vec<Tensor<T>> = vars
            .iter()
            .zip(model.params())
            .map(|(&v, p)| {
                tape.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
            })
            .collect();
        adam_step(model.params_mut(), &grads, &mut state, &cfg.adam)?;
    }

    let (best_model, _, best_epoch) = best.expect("at least one epoch ran");
    Ok(Trained {
        best: best_model,
        last: model,
        report: TrainReport {
            epochs,
            history,
            best_epoch,
        },
    })
}
