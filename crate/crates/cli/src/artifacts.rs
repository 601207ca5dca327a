use std::path::Path;

use serde::{Deserialize, Serialize};

use triage_core::ingest::{
    EncoderState, FeatureMatrix, IngestReport, Preprocessed, RowOrigin, ScalerState, SplitMasks, TriageLevel,
};

use crate::CliError;

pub const PREP_SCHEMA_VERSION: u32 = 1;

/// On-disk form of a preprocessing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepArtifact {
    pub schema_version: u32,
    pub config_hash: String,
    /// Digest of the dataset file the run read.
    pub dataset_digest: String,
    pub cols: usize,
    pub data: Vec<f64>,
    pub labels: Vec<TriageLevel>,
    pub origin: Vec<RowOrigin>,
    pub encoder: EncoderState,
    pub scaler: ScalerState,
    pub masks: SplitMasks,
    pub report: IngestReport,
}

impl PrepArtifact {
    pub fn new(prep: &Preprocessed, config_hash: String, dataset_digest: String) -> Self {
        Self {
            schema_version: PREP_SCHEMA_VERSION,
            config_hash,
            dataset_digest,
            cols: prep.matrix.cols(),
            data: prep.matrix.data().to_vec(),
            labels: prep.matrix.labels().to_vec(),
            origin: prep.matrix.origin().to_vec(),
            encoder: prep.encoder.clone(),
            scaler: prep.scaler.clone(),
            masks: prep.masks.clone(),
            report: prep.report.clone(),
        }
    }

    pub fn preprocessed(&self) -> Result<Preprocessed, CliError> {
        let matrix = FeatureMatrix::from_parts(self.cols, self.data.clone(), self.labels.clone(), self.origin.clone())
            .map_err(|e| CliError::Data(format!("preprocessed artifact: {e}")))?;
        if self.masks.total() != matrix.rows() {
            return Err(CliError::Data(
                "preprocessed artifact: split masks do not cover the matrix".into(),
            ));
        }
        Ok(Preprocessed {
            matrix,
            encoder: self.encoder.clone(),
            scaler: self.scaler.clone(),
            masks: self.masks.clone(),
            report: self.report.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string(self).map_err(|e| CliError::runtime("preprocess", e))?;
        std::fs::write(path, text).map_err(|e| CliError::runtime("preprocess", format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e} (run `triage preprocess` first)", path.display())))?;
        let artifact: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if artifact.schema_version != PREP_SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "{}: schema version {} is not {PREP_SCHEMA_VERSION}",
                path.display(),
                artifact.schema_version
            )));
        }
        Ok(artifact)
    }
}
