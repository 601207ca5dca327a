//! Classification metrics, run reports and the configuration digest.

mod metrics;
mod report;

pub use metrics::{compute_metrics, ClassMetrics, Metrics};
pub use report::{
    config_hash, content_hash, read_report, write_report, write_summary, GraphInfo, RunReport, SplitMetrics,
    REPORT_SCHEMA_VERSION,
};


#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{truth} true labels but {predicted} predictions")]
    Length { truth: usize, predicted: usize },
    #[error("no labels to evaluate")]
    Empty,
    #[error("report schema version {found} is newer than supported version {supported}")]
    Version { found: u32, supported: u32 },
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(String),
}
