use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::json;

use triage_core::baselines::{svm_train, BaselineBundle, BaselineModel, KnnModel};
use triage_core::evalmetrics::{
    compute_metrics, config_hash, content_hash, write_report, write_summary, GraphInfo, Metrics, RunReport,
    SplitMetrics, REPORT_SCHEMA_VERSION,
};
use triage_core::gnn::{train, ModelBundle, Preset, TrainConfig};
use triage_core::ingest::{load_dataset, preprocess, LoadOptions, Preprocessed, SplitMasks, TriageLevel};
use triage_core::simgraph::{build_graph, mean_pairwise, Metric, SimilarityGraph};

use crate::{CliError, PrepArtifact, RunConfig};

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime("output", format!("{}: {e}", dir.display())))
}

pub fn prep_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("preprocessed.json")
}

/// Loads, cleans, balances and scales the dataset, then writes the artifact.
pub fn run_preprocess(cfg: &RunConfig) -> Result<PrepArtifact, CliError> {
    let dataset = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Config("no dataset given (--dataset or `dataset` in the config)".into()))?;
    let bytes =
        std::fs::read(dataset).map_err(|e| CliError::runtime("ingest", format!("{}: {e}", dataset.display())))?;
    let digest = content_hash(&bytes);
    let opts = LoadOptions {
        header_map: cfg.header_map(),
        ..Default::default()
    };
    let raw = load_dataset(dataset, &opts)?;
    let prep = preprocess(raw, &cfg.preprocess_config())?;
    let hash = config_hash(&json!({
        "dataset": digest,
        "header_map": cfg.header_map,
        "preprocess": cfg.preprocess_config(),
    }));
    let artifact = PrepArtifact::new(&prep, hash, digest);
    ensure_dir(&cfg.out_dir)?;
    artifact.save(&prep_path(cfg))?;
    Ok(artifact)
}

pub fn load_prep(cfg: &RunConfig) -> Result<(PrepArtifact, Preprocessed), CliError> {
    let artifact = PrepArtifact::load(&prep_path(cfg))?;
    let prep = artifact.preprocessed()?;
    Ok((artifact, prep))
}

pub fn graph_key(cfg: &RunConfig, prep_hash: &str, metric: Metric) -> Result<String, CliError> {
    Ok(config_hash(&json!({
        "prep": prep_hash,
        "metric": metric,
        "threshold": cfg.threshold(metric)?,
    })))
}

/// The graph for `metric`, read from the cache when its key matches.
pub fn graph_for(
    cfg: &RunConfig,
    artifact: &PrepArtifact,
    prep: &Preprocessed,
    metric: Metric,
) -> Result<(SimilarityGraph<f64>, PathBuf, bool), CliError> {
    let dir = cfg.out_dir.join("graphs");
    ensure_dir(&dir)?;
    let key = graph_key(cfg, &artifact.config_hash, metric)?;
    let path = dir.join(format!("{}-{key}.grph", metric.name()));
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(graph) = SimilarityGraph::from_snapshot(&bytes) {
            if graph.node_count() == prep.matrix.rows() {
                return Ok((graph, path, true));
            }
        }
        tracing::warn!(path = %path.display(), "ignoring unreadable cached graph");
    }
    let threshold = match cfg.threshold(metric)? {
        Some(t) => t,
        None => mean_pairwise(&prep.matrix, metric)?,
    };
    let graph = build_graph(&prep.matrix, metric, threshold)?;
    std::fs::write(&path, graph.to_snapshot())
        .map_err(|e| CliError::runtime("graph", format!("{}: {e}", path.display())))?;
    Ok((graph, path, false))
}

fn split_metrics(
    labels: &[TriageLevel],
    predicted: &[TriageLevel],
    masks: &SplitMasks,
) -> Result<SplitMetrics, CliError> {
    let on = |rows: &[usize]| -> Result<Option<Metrics>, CliError> {
        if rows.is_empty() {
            return Ok(None);
        }
        let truth: Vec<TriageLevel> = rows.iter().map(|&r| labels[r]).collect();
        let pred: Vec<TriageLevel> = rows.iter().map(|&r| predicted[r]).collect();
        Ok(Some(compute_metrics(&truth, &pred)?))
    };
    Ok(SplitMetrics {
        train: on(&masks.train)?,
        test: on(&masks.test)?,
        eval: on(&masks.eval)?,
    })
}

fn graph_info(graph: &SimilarityGraph<f64>) -> GraphInfo {
    let t = graph.threshold();
    GraphInfo {
        metric: graph.metric().name().to_string(),
        threshold: t.value,
        threshold_source: t.source.name().to_string(),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
    }
}

/// Transductive metrics of a GNN bundle on every split.
pub fn evaluate_bundle(bundle: &ModelBundle, prep: &Preprocessed) -> Result<SplitMetrics, CliError> {
    if bundle.graph.node_count() != prep.matrix.rows() {
        return Err(CliError::Config(format!(
            "bundle graph has {} nodes but the preprocessed matrix has {} rows",
            bundle.graph.node_count(),
            prep.matrix.rows()
        )));
    }
    let predicted: Vec<TriageLevel> = bundle
        .transductive_predictions()?
        .into_iter()
        .map(|c| TriageLevel::from_code(c).expect("four-class model"))
        .collect();
    split_metrics(prep.matrix.labels(), &predicted, &prep.masks)
}

pub fn evaluate_baseline(bundle: &BaselineBundle, prep: &Preprocessed) -> Result<SplitMetrics, CliError> {
    let rows: Vec<usize> = (0..prep.matrix.rows()).collect();
    let predicted = match &bundle.model {
        BaselineModel::Knn(m) => m.predict_rows(&prep.matrix, &rows)?,
        BaselineModel::Svm { model, .. } => model.predict_rows(&prep.matrix, &rows)?,
    };
    split_metrics(prep.matrix.labels(), &predicted, &prep.masks)
}

pub struct GnnRun {
    pub bundle: ModelBundle,
    pub report: RunReport,
}

pub fn train_cell(
    cfg: &RunConfig,
    artifact: &PrepArtifact,
    prep: &Preprocessed,
    graph: &SimilarityGraph<f64>,
    preset: Preset,
) -> Result<GnnRun, CliError> {
    let started = now_ms();
    let spec = preset.spec();
    let train_cfg: TrainConfig = cfg.train_config();
    let hash = config_hash(&json!({
        "graph": graph_key(cfg, &artifact.config_hash, graph.metric())?,
        "model": spec,
        "train": train_cfg,
    }));
    let trained = train(&spec, graph, &prep.matrix.label_codes(), &prep.masks, &train_cfg)?;
    let bundle = ModelBundle::assemble(
        trained,
        train_cfg,
        hash.clone(),
        prep.encoder.clone(),
        prep.scaler.clone(),
        graph.clone(),
    );
    let metrics = evaluate_bundle(&bundle, prep)?;
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: preset.name().to_string(),
        graph: Some(graph_info(graph)),
        config_hash: hash,
        seed: cfg.seed,
        history: bundle.report.history.clone(),
        best_epoch: Some(bundle.report.best_epoch),
        metrics,
        ingest: prep.report.clone(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        notes: Default::default(),
    };
    Ok(GnnRun { bundle, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Knn,
    Svm,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 2] = [BaselineKind::Knn, BaselineKind::Svm];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Knn => "KNN",
            BaselineKind::Svm => "SVM",
        }
    }
}

pub struct BaselineRun {
    pub bundle: BaselineBundle,
    pub report: RunReport,
}

pub fn train_baseline(
    cfg: &RunConfig,
    artifact: &PrepArtifact,
    prep: &Preprocessed,
    kind: BaselineKind,
) -> Result<BaselineRun, CliError> {
    let started = now_ms();
    let train_rows = &prep.masks.train;
    let (model, settings) = match kind {
        BaselineKind::Knn => (
            BaselineModel::Knn(KnnModel::fit(&prep.matrix, train_rows, &cfg.knn)?),
            json!(cfg.knn),
        ),
        BaselineKind::Svm => {
            let config = cfg.svm_config();
            let model = svm_train(&prep.matrix, train_rows, &config)?;
            (BaselineModel::Svm { model, config }, json!(config))
        }
    };
    let hash = config_hash(&json!({"prep": artifact.config_hash, "baseline": kind.name(), "settings": settings}));
    let bundle = BaselineBundle {
        model,
        config_hash: hash.clone(),
        encoder: prep.encoder.clone(),
        scaler: prep.scaler.clone(),
    };
    let metrics = evaluate_baseline(&bundle, prep)?;
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: kind.name().to_string(),
        graph: None,
        config_hash: hash,
        seed: cfg.seed,
        history: Vec::new(),
        best_epoch: None,
        metrics,
        ingest: prep.report.clone(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        notes: [("settings".to_string(), settings.to_string())].into(),
    };
    Ok(BaselineRun { bundle, report })
}

pub fn model_path(cfg: &RunConfig, preset: Preset, metric: Metric) -> PathBuf {
    cfg.out_dir
        .join("models")
        .join(format!("{}-{}.tgb", preset.name(), metric.name()))
}

pub fn baseline_path(cfg: &RunConfig, kind: BaselineKind) -> PathBuf {
    cfg.out_dir.join("models").join(format!("{}.tbl", kind.name()))
}

pub fn report_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join("reports").join(format!("{name}.json"))
}

/// Trains one preset on one metric and writes its bundle and report.
pub fn run_train(cfg: &RunConfig, preset: Preset, metric: Metric) -> Result<GnnRun, CliError> {
    let (artifact, prep) = load_prep(cfg)?;
    let (graph, _, _) = graph_for(cfg, &artifact, &prep, metric)?;
    let run = train_cell(cfg, &artifact, &prep, &graph, preset)?;
    save_gnn(cfg, preset, metric, &run)?;
    Ok(run)
}

fn save_gnn(cfg: &RunConfig, preset: Preset, metric: Metric, run: &GnnRun) -> Result<(), CliError> {
    ensure_dir(&cfg.out_dir.join("models"))?;
    ensure_dir(&cfg.out_dir.join("reports"))?;
    run.bundle.save(&model_path(cfg, preset, metric))?;
    write_report(
        &run.report,
        &report_path(cfg, &format!("{}-{}", preset.name(), metric.name())),
    )?;
    Ok(())
}

fn save_baseline(cfg: &RunConfig, kind: BaselineKind, run: &BaselineRun) -> Result<(), CliError> {
    ensure_dir(&cfg.out_dir.join("models"))?;
    ensure_dir(&cfg.out_dir.join("reports"))?;
    run.bundle.save(&baseline_path(cfg, kind))?;
    write_report(&run.report, &report_path(cfg, kind.name()))?;
    Ok(())
}

pub struct GridOutcome {
    /// Successful runs, best test accuracy first.
    pub reports: Vec<RunReport>,
    pub ordering: OrderingClaims,
    pub failures: Vec<(String, CliError)>,
    pub summary_path: PathBuf,
}

/// Whether the grid agrees with the published ranking: SAGE ahead of the
/// other architectures, and both baselines behind SAGE. Informational only.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OrderingClaims {
    pub best_sage: Option<f64>,
    pub best_other_gnn: Option<f64>,
    pub best_baseline: Option<f64>,
    pub sage_is_best_architecture: Option<bool>,
    pub baselines_below_sage: Option<bool>,
}

impl OrderingClaims {
    pub fn from_reports(reports: &[RunReport]) -> Self {
        let best = |keep: &dyn Fn(&RunReport) -> bool| {
            reports
                .iter()
                .filter(|r| keep(r))
                .filter_map(RunReport::test_accuracy)
                .max_by(f64::total_cmp)
        };
        let best_sage = best(&|r| r.graph.is_some() && r.model == Preset::Sage.name());
        let best_other_gnn = best(&|r| r.graph.is_some() && r.model != Preset::Sage.name());
        let best_baseline = best(&|r| r.graph.is_none());
        let ahead = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a > b);
        Self {
            best_sage,
            best_other_gnn,
            best_baseline,
            sage_is_best_architecture: ahead(best_sage, best_other_gnn),
            baselines_below_sage: ahead(best_sage, best_baseline),
        }
    }
}

enum Cell {
    Gnn(Preset, Metric),
    Baseline(BaselineKind),
}

impl Cell {
    fn name(&self) -> String {
        match self {
            Cell::Gnn(p, m) => format!("{}-{}", p.name(), m.name()),
            Cell::Baseline(k) => k.name().to_string(),
        }
    }
}

/// Every configured preset on every configured metric plus both baselines.
///
/// Graphs are built once per metric; cells then run on up to `jobs` threads
/// and a failing cell does not stop the others.
pub fn run_grid(cfg: &RunConfig) -> Result<GridOutcome, CliError> {
    let (artifact, prep) = load_prep(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::runtime("grid", e))?;

    let mut graphs = Vec::new();
    let mut failures = Vec::new();
    for &metric in &cfg.metrics {
        match pool.install(|| graph_for(cfg, &artifact, &prep, metric)) {
            Ok((g, _, cached)) => {
                tracing::info!(metric = metric.name(), edges = g.edge_count(), cached, "graph ready");
                graphs.push((metric, g));
            }
            Err(e) => failures.push((format!("graph-{}", metric.name()), e)),
        }
    }
    let mut cells: Vec<Cell> = graphs
        .iter()
        .flat_map(|(m, _)| cfg.presets.iter().map(move |&p| Cell::Gnn(p, *m)))
        .collect();
    cells.extend(BaselineKind::ALL.map(Cell::Baseline));

    let results: Vec<(String, Result<RunReport, CliError>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let outcome = match *cell {
                    Cell::Gnn(preset, metric) => {
                        let graph = &graphs.iter().find(|(m, _)| *m == metric).expect("graph built").1;
                        train_cell(cfg, &artifact, &prep, graph, preset).and_then(|run| {
                            save_gnn(cfg, preset, metric, &run)?;
                            Ok(run.report)
                        })
                    }
                    Cell::Baseline(kind) => train_baseline(cfg, &artifact, &prep, kind).and_then(|run| {
                        save_baseline(cfg, kind, &run)?;
                        Ok(run.report)
                    }),
                };
                match &outcome {
                    Ok(r) => tracing::info!(cell = %cell.name(), test_accuracy = ?r.test_accuracy(), "run finished"),
                    Err(e) => tracing::error!(cell = %cell.name(), error = %e, "run failed"),
                }
                (cell.name(), outcome)
            })
            .collect()
    });
    let mut reports = Vec::new();
    for (name, r) in results {
        match r {
            Ok(report) => reports.push(report),
            Err(e) => failures.push((name, e)),
        }
    }
    reports.sort_by(|a, b| {
        let acc = |r: &RunReport| r.test_accuracy().unwrap_or(f64::NEG_INFINITY);
        acc(b).total_cmp(&acc(a))
    });

    let summary_path = cfg.out_dir.join("summary.csv");
    let file = std::fs::File::create(&summary_path)
        .map_err(|e| CliError::runtime("grid", format!("{}: {e}", summary_path.display())))?;
    write_summary(&reports, std::io::BufWriter::new(file))?;
    Ok(GridOutcome {
        ordering: OrderingClaims::from_reports(&reports),
        reports,
        failures,
        summary_path,
    })
}
