use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineError, KnnModel, SvmConfig, SvmModel};
use crate::binio::{open_checked, read_sections, require, BinReader, BinWriter, FormatError};
use crate::gnn::{json_err, read_tensors, read_transforms, write_tensors, write_transforms};
use crate::ingest::{EncoderState, ScalerState, TriageLevel, CLASS_COUNT};
use crate::numcore::Tensor;

pub const BASELINE_MAGIC: &[u8; 4] = b"TBL1";
pub const BASELINE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Knn(KnnModel<f64>),
    Svm { model: SvmModel, config: SvmConfig },
}

impl BaselineModel {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineModel::Knn(_) => "KNN",
            BaselineModel::Svm { .. } => "SVM",
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<TriageLevel, BaselineError> {
        match self {
            BaselineModel::Knn(m) => m.predict(x),
            BaselineModel::Svm { model, .. } => model.predict(x),
        }
    }
}

/// Baseline model with the transforms it was trained under; same framing as
/// the GNN bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineBundle {
    pub model: BaselineModel,
    pub config_hash: String,
    pub encoder: EncoderState,
    pub scaler: ScalerState,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Header {
    Knn { k: usize, config_hash: String },
    Svm { config: SvmConfig, config_hash: String },
}

impl BaselineBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (header, data) = match &self.model {
            BaselineModel::Knn(m) => {
                let labels: Vec<f64> = m.labels().iter().map(|l| l.code() as f64).collect();
                let tensors = [
                    Tensor::from_vec(m.labels().len(), m.dim(), m.features().to_vec()).expect("consistent"),
                    Tensor::from_vec(labels.len(), 1, labels).expect("consistent"),
                ];
                (
                    Header::Knn {
                        k: m.k(),
                        config_hash: self.config_hash.clone(),
                    },
                    write_tensors(&tensors),
                )
            }
            BaselineModel::Svm { model, config } => {
                let w: Vec<f64> = model.weights.iter().flatten().copied().collect();
                let tensors = [
                    Tensor::from_vec(model.dim(), CLASS_COUNT, w).expect("consistent"),
                    Tensor::from_vec(1, CLASS_COUNT, model.bias.to_vec()).expect("consistent"),
                ];
                (
                    Header::Svm {
                        config: *config,
                        config_hash: self.config_hash.clone(),
                    },
                    write_tensors(&tensors),
                )
            }
        };
        let mut w = BinWriter::new();
        w.bytes(BASELINE_MAGIC);
        w.u32(BASELINE_VERSION);
        w.section(
            b"SPEC",
            serde_json::to_string(&header).expect("header serialises").as_bytes(),
        );
        w.section(b"DATA", &data);
        w.section(b"XFRM", &write_transforms(&self.encoder, &self.scaler));
        w.finish_with_crc()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BaselineError> {
        let body = open_checked(bytes, BASELINE_MAGIC)?;
        let mut r = BinReader::new(body);
        let version = r.u32("baseline version")?;
        if version != BASELINE_VERSION {
            return Err(FormatError::Version {
                found: version,
                supported: BASELINE_VERSION,
            }
            .into());
        }
        let sections = read_sections(&mut r)?;
        let header: Header =
            serde_json::from_slice(require(&sections, b"SPEC")?).map_err(json_err("baseline header"))?;
        let tensors = read_tensors(require(&sections, b"DATA")?)?;
        let (encoder, scaler) = read_transforms(require(&sections, b"XFRM")?)?;
        let malformed = |detail: &str| {
            BaselineError::Format(FormatError::Malformed {
                what: "baseline data",
                detail: detail.to_string(),
            })
        };
        let [a, b] = <[Tensor<f64>; 2]>::try_from(tensors).map_err(|_| malformed("expected two tensors"))?;
        let (model, config_hash) = match header {
            Header::Knn { k, config_hash } => {
                let labels = b
                    .data()
                    .iter()
                    .map(|&v| TriageLevel::from_code(v as usize).filter(|_| v.fract() == 0.0 && v >= 0.0))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| malformed("bad label code"))?;
                let m = KnnModel::from_parts(a.cols(), a.into_vec(), labels, k)?;
                (BaselineModel::Knn(m), config_hash)
            }
            Header::Svm { config, config_hash } => {
                if a.cols() != CLASS_COUNT || b.shape() != (1, CLASS_COUNT) {
                    return Err(malformed("separator shape"));
                }
                let weights = (0..a.rows()).map(|r| a.row(r).try_into().unwrap()).collect();
                let bias = b.row(0).try_into().unwrap();
                (
                    BaselineModel::Svm {
                        model: SvmModel { weights, bias },
                        config,
                    },
                    config_hash,
                )
            }
        };
        Ok(Self {
            model,
            config_hash,
            encoder,
            scaler,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| BaselineError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let bytes = std::fs::read(path).map_err(|e| BaselineError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
