use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::IngestError;

/// Number of clinical features per patient.
pub const FEATURE_COUNT: usize = 16;
/// Number of numeric (non-categorical) features.
pub const NUMERIC_COUNT: usize = 14;
pub const CLASS_COUNT: usize = 4;

/// Canonical feature names, in matrix column order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "age",
    "gender",
    "chest_pain_type",
    "blood_pressure",
    "cholesterol",
    "max_heart_rate",
    "exercise_angina",
    "plasma_glucose",
    "skin_thickness",
    "insulin",
    "bmi",
    "diabetes_pedigree",
    "hypertension",
    "heart_disease",
    "residence_type",
    "smoking_status",
];

/// Canonical name of the target column.
pub const LABEL_COLUMN: &str = "triage";

/// Four-level urgency scale, most urgent first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TriageLevel {
    Red,
    Orange,
    Yellow,
    Green,
}

impl TriageLevel {
    pub const ALL: [TriageLevel; CLASS_COUNT] = [Self::Red, Self::Orange, Self::Yellow, Self::Green];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Red => "Red",
            Self::Orange => "Orange",
            Self::Yellow => "Yellow",
            Self::Green => "Green",
        }
    }
}

impl fmt::Display for TriageLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TriageLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "red" | "0" => Ok(Self::Red),
            "orange" | "1" => Ok(Self::Orange),
            "yellow" | "2" => Ok(Self::Yellow),
            "green" | "3" => Ok(Self::Green),
            other => Err(format!("unknown triage level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum ResidenceType {
    Rural,
    Urban,
}

impl ResidenceType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rural => "Rural",
            Self::Urban => "Urban",
        }
    }
}

impl FromStr for ResidenceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rural" => Ok(Self::Rural),
            "urban" => Ok(Self::Urban),
            _ => Err(format!("unknown residence type {:?}", s.trim())),
        }
    }
}

impl TryFrom<String> for ResidenceType {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ResidenceType> for &'static str {
    fn from(v: ResidenceType) -> Self {
        v.as_str()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum SmokingStatus {
    NeverSmoked,
    PreviouslySmoked,
    Smoke,
    Unknown,
}

impl SmokingStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NeverSmoked => "never smoked",
            Self::PreviouslySmoked => "previously smoked",
            Self::Smoke => "smoke",
            Self::Unknown => "Unknown",
        }
    }
}

impl FromStr for SmokingStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "never smoked" => Ok(Self::NeverSmoked),
            "previously smoked" | "formerly smoked" => Ok(Self::PreviouslySmoked),
            "smoke" | "smokes" => Ok(Self::Smoke),
            "unknown" => Ok(Self::Unknown),
            _ => Err(format!("unknown smoking status {:?}", s.trim())),
        }
    }
}

impl TryFrom<String> for SmokingStatus {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SmokingStatus> for &'static str {
    fn from(v: SmokingStatus) -> Self {
        v.as_str()
    }
}

/// One validated patient row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub age: f64,
    pub gender: f64,
    pub chest_pain_type: f64,
    pub blood_pressure: f64,
    pub cholesterol: f64,
    pub max_heart_rate: f64,
    pub exercise_angina: f64,
    pub plasma_glucose: f64,
    pub skin_thickness: f64,
    pub insulin: f64,
    pub bmi: f64,
    pub diabetes_pedigree: f64,
    pub hypertension: f64,
    pub heart_disease: f64,
    pub residence_type: ResidenceType,
    pub smoking_status: SmokingStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<TriageLevel>,
}

impl PatientRecord {
    /// Numeric features in column order.
    pub fn numeric(&self) -> [f64; NUMERIC_COUNT] {
        [
            self.age,
            self.gender,
            self.chest_pain_type,
            self.blood_pressure,
            self.cholesterol,
            self.max_heart_rate,
            self.exercise_angina,
            self.plasma_glucose,
            self.skin_thickness,
            self.insulin,
            self.bmi,
            self.diabetes_pedigree,
            self.hypertension,
            self.heart_disease,
        ]
    }

    pub fn from_parts(
        numeric: [f64; NUMERIC_COUNT],
        residence_type: ResidenceType,
        smoking_status: SmokingStatus,
        label: Option<TriageLevel>,
    ) -> Self {
        let [age, gender, chest_pain_type, blood_pressure, cholesterol, max_heart_rate, exercise_angina, plasma_glucose, skin_thickness, insulin, bmi, diabetes_pedigree, hypertension, heart_disease] =
            numeric;
        Self {
            age,
            gender,
            chest_pain_type,
            blood_pressure,
            cholesterol,
            max_heart_rate,
            exercise_angina,
            plasma_glucose,
            skin_thickness,
            insulin,
            bmi,
            diabetes_pedigree,
            hypertension,
            heart_disease,
            residence_type,
            smoking_status,
            label,
        }
    }

    /// Checks the numeric invariants, naming the first offending field.
    pub fn validate(&self) -> Result<(), IngestError> {
        for (name, v) in FEATURE_NAMES.iter().zip(self.numeric()) {
            check_numeric(name, v)?;
        }
        Ok(())
    }
}

fn check_numeric(field: &str, v: f64) -> Result<(), IngestError> {
    if !v.is_finite() {
        return Err(IngestError::InvalidValue {
            field: field.to_string(),
            reason: "must be finite".into(),
        });
    }
    if (field == "age" || field == "diabetes_pedigree") && v < 0.0 {
        return Err(IngestError::InvalidValue {
            field: field.to_string(),
            reason: "must be non-negative".into(),
        });
    }
    Ok(())
}

/// A loaded row before cleaning: any field may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// 1-based data row number in the source file.
    pub row: usize,
    pub numeric: [Option<f64>; NUMERIC_COUNT],
    pub residence_type: Option<ResidenceType>,
    pub smoking_status: Option<SmokingStatus>,
    pub label: Option<TriageLevel>,
}

impl RawRecord {
    /// The complete record, or `None` if any field is missing.
    pub fn complete(&self) -> Option<PatientRecord> {
        let mut numeric = [0.0; NUMERIC_COUNT];
        for (dst, src) in numeric.iter_mut().zip(self.numeric) {
            *dst = src?;
        }
        Some(PatientRecord::from_parts(
            numeric,
            self.residence_type?,
            self.smoking_status?,
            Some(self.label?),
        ))
    }

    pub fn from_record(row: usize, r: &PatientRecord) -> Self {
        Self {
            row,
            numeric: r.numeric().map(Some),
            residence_type: Some(r.residence_type),
            smoking_status: Some(r.smoking_status),
            label: r.label,
        }
    }
}

/// Maps file headers onto canonical column names.
///
/// Headers are matched case-insensitively after trimming, with spaces and
/// hyphens treated as underscores; explicit aliases take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeaderMap {
    pub aliases: BTreeMap<String, String>,
}

impl HeaderMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_alias(mut self, header: &str, canonical: &str) -> Self {
        self.aliases.insert(header.to_string(), canonical.to_string());
        self
    }

    pub fn resolve(&self, header: &str) -> Option<&'static str> {
        let target = self
            .aliases
            .get(header)
            .or_else(|| self.aliases.get(header.trim()))
            .map(|s| normalize(s))
            .unwrap_or_else(|| normalize(header));
        canonical_name(&target)
    }
}

fn normalize(h: &str) -> String {
    h.trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c })
        .collect()
}

fn canonical_name(normalized: &str) -> Option<&'static str> {
    if let Some(name) = FEATURE_NAMES.iter().find(|n| **n == normalized) {
        return Some(name);
    }
    match normalized {
        "triage" | "label" | "priority" | "triage_level" => Some(LABEL_COLUMN),
        "sex" => Some("gender"),
        "avg_glucose_level" | "glucose" => Some("plasma_glucose"),
        "residence" => Some("residence_type"),
        "smoking" => Some("smoking_status"),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub header_map: HeaderMap,
    pub delimiter: u8,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            header_map: HeaderMap::default(),
            delimiter: b',',
        }
    }
}

fn is_null(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "nan" | "null" | "none" | "?"
    )
}

/// Reads a delimited patient file, one [`RawRecord`] per data row.
pub fn load_dataset(path: &Path, opts: &LoadOptions) -> Result<Vec<RawRecord>, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(file, opts)
}

/// [`load_dataset`] over any reader.
pub fn read_dataset<R: std::io::Read>(reader: R, opts: &LoadOptions) -> Result<Vec<RawRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| IngestError::Csv(e.to_string()))?.clone();

    let mut columns: BTreeMap<&'static str, usize> = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(name) = opts.header_map.resolve(h) {
            columns.entry(name).or_insert(i);
        }
    }
    let mut feature_cols = [0usize; FEATURE_COUNT];
    for (slot, name) in feature_cols.iter_mut().zip(FEATURE_NAMES) {
        *slot = *columns
            .get(name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
    }
    let label_col = *columns
        .get(LABEL_COLUMN)
        .ok_or_else(|| IngestError::MissingColumn(LABEL_COLUMN.to_string()))?;

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| IngestError::Csv(format!("row {row}: {e}")))?;
        let cell = |col: usize| rec.get(col).unwrap_or("");
        let bad = |name: &str, value: &str| IngestError::Cell {
            row,
            column: name.to_string(),
            value: value.to_string(),
        };

        let mut numeric = [None; NUMERIC_COUNT];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let (name, raw) = (FEATURE_NAMES[k], cell(feature_cols[k]));
            if is_null(raw) {
                continue;
            }
            let v: f64 = raw.trim().parse().map_err(|_| bad(name, raw))?;
            check_numeric(name, v).map_err(|_| bad(name, raw))?;
            *slot = Some(v);
        }
        let categorical = |k: usize| {
            let raw = cell(feature_cols[k]);
            (!is_null(raw)).then_some(raw)
        };
        let residence_type = categorical(14)
            .map(|raw| raw.parse().map_err(|_| bad("residence_type", raw)))
            .transpose()?;
        let smoking_status = categorical(15)
            .map(|raw| raw.parse().map_err(|_| bad("smoking_status", raw)))
            .transpose()?;
        let raw_label = cell(label_col);
        let label = if is_null(raw_label) {
            None
        } else {
            Some(raw_label.parse().map_err(|_| bad(LABEL_COLUMN, raw_label))?)
        };
        out.push(RawRecord {
            row,
            numeric,
            residence_type,
            smoking_status,
            label,
        });
    }
    Ok(out)
}
