use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{open_checked, read_sections, require, BinReader, BinWriter, FormatError};
use crate::gnn::layers::GraphContext;
use crate::gnn::{train, GnnError, Model, ModelSpec, TrainConfig, TrainReport, Trained};
use crate::ingest::{EncoderState, Preprocessed, ScalerState};
use crate::numcore::Tensor;
use crate::simgraph::{build_graph, mean_pairwise, Metric, SimilarityGraph, Threshold};

pub const BUNDLE_MAGIC: &[u8; 4] = b"TGB1";
pub const BUNDLE_VERSION: u32 = 1;

/// Everything inductive prediction needs, persisted as one file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub spec: ModelSpec,
    pub train_config: TrainConfig,
    /// Short digest of the run configuration that produced the bundle.
    pub config_hash: String,
    /// Weights of the best evaluation epoch, used for prediction.
    pub weights: Vec<Tensor<f64>>,
    pub final_weights: Vec<Tensor<f64>>,
    pub encoder: EncoderState,
    pub scaler: ScalerState,
    pub graph: SimilarityGraph<f64>,
    pub report: TrainReport,
}

#[derive(Serialize, Deserialize)]
struct SpecSection {
    spec: ModelSpec,
    train_config: TrainConfig,
    config_hash: String,
}

pub(crate) fn write_tensors(tensors: &[Tensor<f64>]) -> Vec<u8> {
    let mut w = BinWriter::new();
    w.u64(tensors.len() as u64);
    for t in tensors {
        w.u64(t.rows() as u64);
        w.u64(t.cols() as u64);
        for &v in t.data() {
            w.f64(v);
        }
    }
    w.into_bytes()
}

pub(crate) fn read_tensors(bytes: &[u8]) -> Result<Vec<Tensor<f64>>, FormatError> {
    let mut r = BinReader::new(bytes);
    let count = r.len_prefix("tensor count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let rows = r.len_prefix("tensor rows")?;
        let cols = r.len_prefix("tensor cols")?;
        let len = rows.checked_mul(cols).filter(|&n| n <= r.remaining() / 8);
        let len = len.ok_or(FormatError::Truncated("tensor data"))?;
        let data = (0..len).map(|_| r.f64("tensor data")).collect::<Result<Vec<_>, _>>()?;
        out.push(Tensor::from_vec(rows, cols, data).map_err(|e| FormatError::Malformed {
            what: "tensor",
            detail: e.to_string(),
        })?);
    }
    if !r.is_done() {
        return Err(FormatError::Malformed {
            what: "tensor list",
            detail: "trailing bytes".into(),
        });
    }
    Ok(out)
}

pub(crate) fn write_transforms(encoder: &EncoderState, scaler: &ScalerState) -> Vec<u8> {
    let mut w = BinWriter::new();
    w.str(&serde_json::to_string(encoder).expect("encoder serialises"));
    w.f64_slice(&scaler.min);
    w.f64_slice(&scaler.max);
    w.into_bytes()
}

pub(crate) fn read_transforms(bytes: &[u8]) -> Result<(EncoderState, ScalerState), FormatError> {
    let mut r = BinReader::new(bytes);
    let encoder = serde_json::from_str(&r.str("encoder")?).map_err(json_err("encoder"))?;
    let scaler = ScalerState {
        min: r.f64_vec("scaler min")?,
        max: r.f64_vec("scaler max")?,
    };
    if scaler.min.len() != scaler.max.len() || !r.is_done() {
        return Err(FormatError::Malformed {
            what: "transforms",
            detail: "inconsistent scaler state".into(),
        });
    }
    Ok((encoder, scaler))
}

pub(crate) fn json_err(what: &'static str) -> impl Fn(serde_json::Error) -> FormatError {
    move |e| FormatError::Malformed {
        what,
        detail: e.to_string(),
    }
}

impl ModelBundle {
    pub fn assemble(
        trained: Trained<f64>,
        train_config: TrainConfig,
        config_hash: String,
        encoder: EncoderState,
        scaler: ScalerState,
        graph: SimilarityGraph<f64>,
    ) -> Self {
        Self {
            spec: trained.best.spec().clone(),
            train_config,
            config_hash,
            weights: trained.best.into_params(),
            final_weights: trained.last.into_params(),
            encoder,
            scaler,
            graph,
            report: trained.report,
        }
    }

    /// Builds the graph over every preprocessed row, trains on the training
    /// mask and packages the result. `threshold` defaults to the dataset mean.
    pub fn fit(
        prep: &Preprocessed,
        metric: Metric,
        threshold: Option<Threshold>,
        spec: &ModelSpec,
        cfg: &TrainConfig,
        config_hash: String,
    ) -> Result<Self, GnnError> {
        let threshold = match threshold {
            Some(t) => t,
            None => mean_pairwise(&prep.matrix, metric)?,
        };
        let graph = build_graph(&prep.matrix, metric, threshold)?;
        let trained = train(spec, &graph, &prep.matrix.label_codes(), &prep.masks, cfg)?;
        Ok(Self::assemble(
            trained,
            *cfg,
            config_hash,
            prep.encoder.clone(),
            prep.scaler.clone(),
            graph,
        ))
    }

    pub fn model(&self) -> Result<Model<f64>, GnnError> {
        Model::from_params(self.spec.clone(), self.weights.clone())
    }

    pub fn final_model(&self) -> Result<Model<f64>, GnnError> {
        Model::from_params(self.spec.clone(), self.final_weights.clone())
    }

    /// Predictions for every stored node with the best weights.
    pub fn transductive_predictions(&self) -> Result<Vec<usize>, GnnError> {
        let ctx = GraphContext::new(&self.graph, self.train_config.edge_weighting)?;
        let n = self.graph.node_count();
        let x = Tensor::from_vec(n, self.graph.dim(), self.graph.features().to_vec())?;
        self.model()?.predict(&ctx, &x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = SpecSection {
            spec: self.spec.clone(),
            train_config: self.train_config,
            config_hash: self.config_hash.clone(),
        };
        let mut w = BinWriter::new();
        w.bytes(BUNDLE_MAGIC);
        w.u32(BUNDLE_VERSION);
        w.section(
            b"SPEC",
            serde_json::to_string(&spec).expect("spec serialises").as_bytes(),
        );
        w.section(b"WGTS", &write_tensors(&self.weights));
        w.section(b"WFIN", &write_tensors(&self.final_weights));
        w.section(b"XFRM", &write_transforms(&self.encoder, &self.scaler));
        w.section(b"GRPH", &self.graph.to_snapshot());
        w.section(
            b"RPRT",
            serde_json::to_string(&self.report)
                .expect("report serialises")
                .as_bytes(),
        );
        w.finish_with_crc()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GnnError> {
        let body = open_checked(bytes, BUNDLE_MAGIC)?;
        let mut r = BinReader::new(body);
        let version = r.u32("bundle version")?;
        if version != BUNDLE_VERSION {
            return Err(FormatError::Version {
                found: version,
                supported: BUNDLE_VERSION,
            }
            .into());
        }
        let sections = read_sections(&mut r)?;
        let spec: SpecSection =
            serde_json::from_slice(require(&sections, b"SPEC")?).map_err(json_err("spec section"))?;
        let weights = read_tensors(require(&sections, b"WGTS")?)?;
        let final_weights = read_tensors(require(&sections, b"WFIN")?)?;

        let (encoder, scaler) = read_transforms(require(&sections, b"XFRM")?)?;
        let graph = SimilarityGraph::from_snapshot(require(&sections, b"GRPH")?)?;
        let report: TrainReport = serde_json::from_slice(require(&sections, b"RPRT")?).map_err(json_err("report"))?;

        let bundle = Self {
            spec: spec.spec,
            train_config: spec.train_config,
            config_hash: spec.config_hash,
            weights,
            final_weights,
            encoder,
            scaler,
            graph,
            report,
        };
        bundle.model()?;
        bundle.final_model()?;
        if bundle.scaler.cols() != bundle.graph.dim() || bundle.spec.in_dim() != bundle.graph.dim() {
            return Err(GnnError::Spec(
                "bundle transforms, graph and model disagree on width".into(),
            ));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<(), GnnError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| GnnError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, GnnError> {
        let bytes = std::fs::read(path).map_err(|e| GnnError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
