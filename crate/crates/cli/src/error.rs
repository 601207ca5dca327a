use triage_core::baselines::BaselineError;
use triage_core::evalmetrics::EvalError;
use triage_core::gnn::GnnError;
use triage_core::ingest::IngestError;
use triage_core::simgraph::GraphError;

/// Failure of a command, grouped by what the operator has to fix.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{stage}: {message}")]
    Runtime { stage: &'static str, message: String },
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime { .. } => 4,
        }
    }

    pub fn runtime(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Runtime {
            stage,
            message: e.to_string(),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(msg) => CliError::runtime("ingest", msg),
            other => CliError::Data(format!("ingest: {other}")),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::InvalidThreshold { .. } => CliError::Config(e.to_string()),
            other => CliError::runtime("graph", other),
        }
    }
}

impl From<GnnError> for CliError {
    fn from(e: GnnError) -> Self {
        match e {
            GnnError::Ingest(inner) => inner.into(),
            GnnError::Spec(msg) => CliError::Config(msg),
            other => CliError::runtime("gnn", other),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Config(msg) => CliError::Config(msg),
            other => CliError::runtime("baseline", other),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::runtime("report", e)
    }
}
