//! The `triage` command line: preprocess → graph → train → evaluate →
//! compare → serve, with every stage's output written under one directory.

mod artifacts;
mod config;
mod error;
pub mod pipeline;

pub use artifacts::{PrepArtifact, PREP_SCHEMA_VERSION};
pub use config::{RunConfig, TrainSection, DEFAULT_BIND};
pub use error::CliError;
