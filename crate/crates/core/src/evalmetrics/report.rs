use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evalmetrics::{EvalError, Metrics};
use crate::gnn::EpochRecord;
use crate::ingest::IngestReport;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInfo {
    pub metric: String,
    pub threshold: f64,
    pub threshold_source: String,
    pub nodes: usize,
    pub edges: usize,
}

/// Metrics of one model on each split that was evaluated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: Option<Metrics>,
    pub test: Option<Metrics>,
    pub eval: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// Preset name, custom model label or baseline name.
    pub model: String,
    /// Absent for tabular baselines.
    pub graph: Option<GraphInfo>,
    pub config_hash: String,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub metrics: SplitMetrics,
    pub ingest: IngestReport,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Free-form extras such as baseline hyperparameters.
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

/// First 16 hex digits of the SHA-256 of the value's canonical JSON (object
/// keys sorted, no whitespace).
pub fn config_hash<S: Serialize>(config: &S) -> String {
    let value = serde_json::to_value(config).expect("configuration serialises");
    let mut canonical = String::new();
    write_canonical(&value, &mut canonical);
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(&digest[..8])
}

/// First 16 hex digits of the SHA-256 of raw bytes, e.g. an input file.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

// Key order is fixed here rather than trusting the map type, whose ordering
// depends on serde_json features enabled elsewhere in the build.
fn write_canonical(value: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<(), EvalError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| EvalError::Malformed(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}

pub fn read_report(path: &Path) -> Result<RunReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    RunReport::from_json(&text)
}

impl RunReport {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| EvalError::Malformed(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| EvalError::Malformed("missing schema_version".into()))?;
        if found != REPORT_SCHEMA_VERSION as u64 {
            return Err(EvalError::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                supported: REPORT_SCHEMA_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| EvalError::Malformed(e.to_string()))
    }

    pub fn test_accuracy(&self) -> Option<f64> {
        self.metrics.test.as_ref().map(|m| m.accuracy)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// One CSV line per report, in the order given.
pub fn write_summary<W: Write>(reports: &[RunReport], out: W) -> Result<(), EvalError> {
    let err = |e: csv::Error| EvalError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "graph",
        "config_hash",
        "seed",
        "train_accuracy",
        "eval_accuracy",
        "test_accuracy",
        "test_macro_f1",
        "epochs",
        "best_epoch",
    ])
    .map_err(err)?;
    for r in reports {
        let m = &r.metrics;
        w.write_record([
            r.model.clone(),
            r.graph.as_ref().map_or_else(|| "-".to_string(), |g| g.metric.clone()),
            r.config_hash.clone(),
            r.seed.to_string(),
            cell(m.train.as_ref().map(|m| m.accuracy)),
            cell(m.eval.as_ref().map(|m| m.accuracy)),
            cell(m.test.as_ref().map(|m| m.accuracy)),
            cell(m.test.as_ref().map(|m| m.macro_f1)),
            r.history.len().to_string(),
            r.best_epoch.map_or_else(String::new, |e| e.to_string()),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}
