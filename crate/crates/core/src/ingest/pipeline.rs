use serde::{Deserialize, Serialize};

use crate::ingest::{
    apply_encoders, apply_scaler, clean, fit_encoders, fit_scaler, impute_smoking_unknown, smote_oversample,
    split_stratified, synthesize, EncoderState, FeatureMatrix, IngestError, RawRecord, RowOrigin, ScalerState,
    SmokingStatus, SmoteConfig, SmoteScope, SplitConfig, SplitMasks, CLASS_COUNT, FEATURE_COUNT,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub seed: u64,
    pub smote: SmoteConfig,
    pub split: SplitConfig,
}

/// Row counts at every preprocessing stage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub input_rows: usize,
    pub rows_with_nulls: usize,
    pub duplicates_removed: usize,
    pub rows_after_clean: usize,
    pub smoking_imputed: usize,
    pub smoking_fill: Option<SmokingStatus>,
    pub class_counts_before_smote: [usize; CLASS_COUNT],
    pub class_counts_after_smote: [usize; CLASS_COUNT],
    pub synthetic_rows: usize,
    pub smote_scope: Option<SmoteScope>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub eval_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    /// Scaled features, original rows first.
    pub matrix: FeatureMatrix<f64>,
    pub encoder: EncoderState,
    pub scaler: ScalerState,
    pub masks: SplitMasks,
    pub report: IngestReport,
}

// Independent streams for the two random stages.
const SMOTE_STREAM: u64 = 0x5307_e000_0000_0001;
const SPLIT_STREAM: u64 = 0x5b11_7000_0000_0002;

/// clean → impute → encode → SMOTE → scale, then the stratified split.
///
/// With [`SmoteScope::TrainOnly`] the split is drawn on the original rows
/// first and synthetic rows are generated from, and added to, the training
/// partition only.
pub fn preprocess(raw: Vec<RawRecord>, cfg: &PreprocessConfig) -> Result<Preprocessed, IngestError> {
    let mut report = IngestReport {
        input_rows: raw.len(),
        smote_scope: Some(cfg.smote.scope),
        ..Default::default()
    };
    let cleaned = clean(raw);
    report.rows_with_nulls = cleaned.rows_with_nulls;
    report.duplicates_removed = cleaned.duplicates_removed;
    report.rows_after_clean = cleaned.records.len();
    for r in &cleaned.records {
        r.validate()?;
    }

    let (records, imputation) = impute_smoking_unknown(cleaned.records)?;
    report.smoking_imputed = imputation.replaced;
    report.smoking_fill = (imputation.replaced > 0).then_some(imputation.fill);

    let encoder = fit_encoders(&records, report.smoking_fill);
    let encoded = apply_encoders(&records, &encoder)?;
    report.class_counts_before_smote = encoded.class_counts();

    let smote_seed = cfg.seed ^ SMOTE_STREAM;
    let split_seed = cfg.seed ^ SPLIT_STREAM;
    let (balanced, masks) = match cfg.smote.scope {
        SmoteScope::All => {
            let balanced = smote_oversample(&encoded, cfg.smote.k, smote_seed)?;
            let masks = split_stratified(balanced.labels(), &cfg.split, split_seed)?;
            (balanced, masks)
        }
        SmoteScope::TrainOnly => {
            let mut masks = split_stratified(encoded.labels(), &cfg.split, split_seed)?;
            let extra = synthesize(&encoded, &masks.train, cfg.smote.k, smote_seed)?;
            let mut balanced = encoded.clone();
            for (row, label) in extra {
                masks.train.push(balanced.rows());
                balanced.push_row(&row, label, RowOrigin::Synthetic)?;
            }
            (balanced, masks)
        }
    };
    report.class_counts_after_smote = balanced.class_counts();
    report.synthetic_rows = balanced.rows() - encoded.rows();
    report.train_rows = masks.train.len();
    report.test_rows = masks.test.len();
    report.eval_rows = masks.eval.len();

    let scaler = fit_scaler(&balanced)?;
    let (matrix, _) = apply_scaler(&balanced, &scaler)?;
    debug_assert_eq!(matrix.cols(), FEATURE_COUNT);
    Ok(Preprocessed {
        matrix,
        encoder,
        scaler,
        masks,
        report,
    })
}
