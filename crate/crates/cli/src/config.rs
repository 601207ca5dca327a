use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use triage_core::baselines::{KnnConfig, SvmConfig};
use triage_core::gnn::{EdgeWeighting, Preset, TrainConfig};
use triage_core::ingest::{HeaderMap, PreprocessConfig, SmoteConfig, SplitConfig};
use triage_core::numcore::AdamConfig;
use triage_core::simgraph::{Metric, Threshold};

use crate::CliError;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Training knobs; the seed comes from the top-level `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Unset means the preset default for the graph's metric.
    pub epochs: Option<usize>,
    pub adam: AdamConfig,
    pub edge_weighting: EdgeWeighting,
}

/// Everything a run depends on, read from TOML and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// File header → canonical column name.
    pub header_map: BTreeMap<String, String>,
    pub seed: u64,
    pub smote: SmoteConfig,
    pub split: SplitConfig,
    pub metrics: Vec<Metric>,
    /// Per-metric thresholds; a metric without one uses the dataset mean.
    pub thresholds: BTreeMap<Metric, f64>,
    pub presets: Vec<Preset>,
    pub train: TrainSection,
    pub knn: KnnConfig,
    pub svm: SvmConfig,
    pub out_dir: PathBuf,
    pub bind: String,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            header_map: BTreeMap::new(),
            seed: 0,
            smote: SmoteConfig::default(),
            split: SplitConfig::default(),
            metrics: Metric::ALL.to_vec(),
            thresholds: BTreeMap::new(),
            presets: Preset::ALL.to_vec(),
            train: TrainSection::default(),
            knn: KnnConfig::default(),
            svm: SvmConfig::default(),
            out_dir: PathBuf::from("runs"),
            bind: DEFAULT_BIND.to_string(),
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.metrics.is_empty() {
            return Err(CliError::Config("at least one metric is required".into()));
        }
        if self.presets.is_empty() {
            return Err(CliError::Config("at least one preset is required".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        if self.train.epochs == Some(0) {
            return Err(CliError::Config("epochs must be positive".into()));
        }
        if self.knn.k == 0 {
            return Err(CliError::Config("knn.k must be at least 1".into()));
        }
        for (&metric, &value) in &self.thresholds {
            Threshold::user(metric, value)?;
        }
        self.bind
            .parse::<std::net::SocketAddr>()
            .map_err(|e| CliError::Config(format!("bind address {:?}: {e}", self.bind)))?;
        Ok(())
    }

    pub fn header_map(&self) -> HeaderMap {
        HeaderMap {
            aliases: self.header_map.clone(),
        }
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            seed: self.seed,
            smote: self.smote,
            split: self.split,
        }
    }

    pub fn threshold(&self, metric: Metric) -> Result<Option<Threshold>, CliError> {
        self.thresholds
            .get(&metric)
            .map(|&v| Threshold::user(metric, v).map_err(CliError::from))
            .transpose()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            adam: self.train.adam,
            seed: self.seed,
            edge_weighting: self.train.edge_weighting,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        self.svm
    }
}
