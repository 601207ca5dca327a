use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{
    FeatureMatrix, IngestError, PatientRecord, ResidenceType, RowOrigin, SmokingStatus, TriageLevel, FEATURE_COUNT,
    NUMERIC_COUNT,
};

/// Fitted value→code maps for the categorical features.
///
/// Codes follow lexicographic order of the value strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderState {
    pub residence_type: BTreeMap<String, u32>,
    pub smoking_status: BTreeMap<String, u32>,
    /// Value that replaces `Unknown` smoking status at transform time.
    pub smoking_fill: Option<SmokingStatus>,
    pub labels: BTreeMap<String, u32>,
}

fn ordered_codes(values: BTreeSet<&'static str>) -> BTreeMap<String, u32> {
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v.to_string(), i as u32))
        .collect()
}

/// Fixed label map, Red=0 … Green=3.
pub fn label_map() -> BTreeMap<String, u32> {
    TriageLevel::ALL
        .iter()
        .map(|l| (l.name().to_string(), l.code() as u32))
        .collect()
}

pub fn fit_encoders(records: &[PatientRecord], smoking_fill: Option<SmokingStatus>) -> EncoderState {
    let residence: BTreeSet<_> = records.iter().map(|r| r.residence_type.as_str()).collect();
    let smoking: BTreeSet<_> = records.iter().map(|r| r.smoking_status.as_str()).collect();
    EncoderState {
        residence_type: ordered_codes(residence),
        smoking_status: ordered_codes(smoking),
        smoking_fill,
        labels: label_map(),
    }
}

impl EncoderState {
    /// Code of a categorical value; `feature` is a canonical feature name.
    pub fn encode_value(&self, feature: &str, value: &str) -> Result<u32, IngestError> {
        let map = match feature {
            "residence_type" => &self.residence_type,
            "smoking_status" => &self.smoking_status,
            other => {
                return Err(IngestError::InvalidValue {
                    field: other.to_string(),
                    reason: "not a categorical feature".into(),
                })
            }
        };
        map.get(value).copied().ok_or_else(|| IngestError::UnseenCategory {
            field: feature.to_string(),
            value: value.to_string(),
        })
    }

    pub fn decode_value(&self, feature: &str, code: u32) -> Option<&str> {
        let map = match feature {
            "residence_type" => &self.residence_type,
            "smoking_status" => &self.smoking_status,
            _ => return None,
        };
        map.iter().find(|(_, &c)| c == code).map(|(k, _)| k.as_str())
    }

    /// Encoded (unscaled) feature row of one record.
    pub fn encode_row(&self, r: &PatientRecord) -> Result<[f64; FEATURE_COUNT], IngestError> {
        let mut row = [0.0; FEATURE_COUNT];
        row[..NUMERIC_COUNT].copy_from_slice(&r.numeric());
        let smoking = match (r.smoking_status, self.smoking_fill) {
            (SmokingStatus::Unknown, Some(fill)) => fill,
            (s, _) => s,
        };
        row[NUMERIC_COUNT] = self.encode_value("residence_type", r.residence_type.as_str())? as f64;
        row[NUMERIC_COUNT + 1] = self.encode_value("smoking_status", smoking.as_str())? as f64;
        Ok(row)
    }

    /// Inverse of [`EncoderState::encode_row`] (label left empty).
    pub fn decode_row(&self, row: &[f64; FEATURE_COUNT]) -> Result<PatientRecord, IngestError> {
        let code = |feature: &'static str, v: f64| -> Result<&str, IngestError> {
            let bad = || IngestError::UnseenCategory {
                field: feature.to_string(),
                value: v.to_string(),
            };
            if v < 0.0 || v.fract() != 0.0 {
                return Err(bad());
            }
            self.decode_value(feature, v as u32).ok_or_else(bad)
        };
        let residence: ResidenceType = code("residence_type", row[NUMERIC_COUNT])?
            .parse()
            .map_err(|e: String| IngestError::InvalidValue {
                field: "residence_type".into(),
                reason: e,
            })?;
        let smoking: SmokingStatus = code("smoking_status", row[NUMERIC_COUNT + 1])?
            .parse()
            .map_err(|e: String| IngestError::InvalidValue {
                field: "smoking_status".into(),
                reason: e,
            })?;
        let mut numeric = [0.0; NUMERIC_COUNT];
        numeric.copy_from_slice(&row[..NUMERIC_COUNT]);
        Ok(PatientRecord::from_parts(numeric, residence, smoking, None))
    }
}

/// Encodes labelled records into an (unscaled) feature matrix.
pub fn apply_encoders(records: &[PatientRecord], state: &EncoderState) -> Result<FeatureMatrix<f64>, IngestError> {
    let mut m = FeatureMatrix::with_capacity(FEATURE_COUNT, records.len());
    for (i, r) in records.iter().enumerate() {
        let label = r.label.ok_or_else(|| IngestError::InvalidValue {
            field: "triage".into(),
            reason: format!("record {i} has no label"),
        })?;
        m.push_row(&state.encode_row(r)?, label, RowOrigin::Original)?;
    }
    Ok(m)
}
