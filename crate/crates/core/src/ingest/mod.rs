//! Loading and preprocessing of raw patient tables.

mod clean;
mod encode;
mod matrix;
mod pipeline;
mod record;
mod scale;
mod smote;
mod split;
pub mod synthetic;

pub use clean::{clean, impute_smoking_unknown, CleanOutcome, Imputation};
pub use encode::{apply_encoders, fit_encoders, label_map, EncoderState};
pub use matrix::{FeatureMatrix, RowOrigin};
pub use pipeline::{preprocess, IngestReport, PreprocessConfig, Preprocessed};
pub use record::{
    load_dataset, read_dataset, HeaderMap, LoadOptions, PatientRecord, RawRecord, ResidenceType, SmokingStatus,
    TriageLevel, CLASS_COUNT, FEATURE_COUNT, FEATURE_NAMES, LABEL_COLUMN, NUMERIC_COUNT,
};
pub use scale::{apply_scaler, fit_scaler, ScaledRow, ScalerState};
pub use smote::{interpolate, smote_oversample, synthesize, SmoteConfig, SmoteScope};
pub use split::{split_stratified, SplitConfig, SplitMasks};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed delimited file: {0}")]
    Csv(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{column}` value {value:?}")]
    Cell { row: usize, column: String, value: String },
    #[error("invalid `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error("unseen category {value:?} for `{field}`")]
    UnseenCategory { field: String, value: String },
    #[error("smoking_status mode undefined: every value is Unknown")]
    ModeUndefined,
    #[error("class {class} has {count} rows, at least {needed} required")]
    ClassTooSmall {
        class: TriageLevel,
        count: usize,
        needed: usize,
    },
    #[error("shape error: {0}")]
    Shape(String),
}
