use serde_json::{Map, Value};

use triage_core::ingest::{PatientRecord, ResidenceType, SmokingStatus, FEATURE_NAMES, NUMERIC_COUNT};

use crate::ApiError;

/// Reads a patient from a JSON object keyed by the canonical feature names.
///
/// Checked field by field so every rejection names the field at fault.
pub fn parse_patient(body: &Value) -> Result<PatientRecord, ApiError> {
    let Some(obj) = body.as_object() else {
        return Err(ApiError::new(
            axum::http::StatusCode::BAD_REQUEST,
            "malformed_body",
            "expected a JSON object",
        ));
    };
    if let Some(extra) = obj.keys().find(|k| !FEATURE_NAMES.contains(&k.as_str())) {
        return Err(ApiError::field(extra, "unknown field"));
    }
    let mut numeric = [0.0; NUMERIC_COUNT];
    for (slot, name) in numeric.iter_mut().zip(FEATURE_NAMES) {
        *slot = field(obj, name)?
            .as_f64()
            .ok_or_else(|| ApiError::field(name, "expected a number"))?;
    }
    let residence: ResidenceType = text(obj, "residence_type")?
        .parse()
        .map_err(|e: String| ApiError::field("residence_type", e))?;
    let smoking: SmokingStatus = text(obj, "smoking_status")?
        .parse()
        .map_err(|e: String| ApiError::field("smoking_status", e))?;
    let patient = PatientRecord::from_parts(numeric, residence, smoking, None);
    patient.validate().map_err(|e| match e {
        triage_core::ingest::IngestError::InvalidValue { field, reason } => ApiError::field(&field, reason),
        other => ApiError::internal(other.to_string()),
    })?;
    Ok(patient)
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, ApiError> {
    obj.get(name).ok_or_else(|| ApiError::field(name, "missing field"))
}

fn text<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a str, ApiError> {
    field(obj, name)?
        .as_str()
        .ok_or_else(|| ApiError::field(name, "expected a string"))
}
