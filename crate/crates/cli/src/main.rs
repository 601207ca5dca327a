use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use triage_cli::pipeline;
use triage_cli::{CliError, RunConfig};
use triage_core::baselines::{BaselineBundle, BASELINE_MAGIC};
use triage_core::evalmetrics::{RunReport, SplitMetrics};
use triage_core::gnn::{InductiveOptions, ModelBundle, Preset, BUNDLE_MAGIC};
use triage_core::ingest::synthetic::{generate, write_csv, SyntheticConfig};
use triage_core::simgraph::Metric;
use triage_service::{system_clock, AppState, LoadedBundle, RouterOptions};

#[derive(Debug, Parser)]
#[command(
    name = "triage",
    version,
    about = "Patient triage by graph neural network node classification"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output directory for artifacts, bundles and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict to these metrics (repeatable).
    #[arg(long = "metric", global = true)]
    metrics: Vec<Metric>,
    /// Restrict to these presets (repeatable).
    #[arg(long = "preset", global = true)]
    presets: Vec<Preset>,
    /// Edge threshold for the selected metrics instead of the dataset mean.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean, impute, encode, balance and scale the dataset.
    Preprocess,
    /// Build (or reuse) the similarity graph for each metric.
    Graph,
    /// Train one preset on one metric.
    Train,
    /// Recompute split metrics for a saved bundle.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Every preset on every metric plus both baselines.
    Grid,
    /// Serve inductive triage over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic patient file shaped like the public dataset.
    Synth {
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Listen address; falls back to TRIAGE_BIND, then the config.
    #[arg(long)]
    bind: Option<String>,
    /// Append-only queue log, replayed on start.
    #[arg(long)]
    event_log: Option<PathBuf>,
    /// Built console assets to serve at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Allow cross-origin requests (console development).
    #[arg(long)]
    cors: bool,
    /// Reject out-of-range patients instead of clamping them.
    #[arg(long)]
    no_clamp: bool,
}

fn resolve_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if !common.metrics.is_empty() {
        cfg.metrics = common.metrics.clone();
    }
    if !common.presets.is_empty() {
        cfg.presets = common.presets.clone();
    }
    if let Some(t) = common.threshold {
        for &m in &cfg.metrics {
            cfg.thresholds.insert(m, t);
        }
    }
    if common.epochs.is_some() {
        cfg.train.epochs = common.epochs;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime("output", e))?;
    println!("{text}");
    Ok(())
}

fn single<T: Copy + std::fmt::Debug>(items: &[T], what: &str) -> Result<T, CliError> {
    match items {
        [one] => Ok(*one),
        _ => Err(CliError::Config(format!(
            "train needs exactly one {what}, got {items:?}"
        ))),
    }
}

fn eval(cfg: &RunConfig, path: &std::path::Path) -> Result<(), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let (_, prep) = pipeline::load_prep(cfg)?;
    let (model, hash, metrics): (String, String, SplitMetrics) = if bytes.starts_with(BUNDLE_MAGIC) {
        let bundle = ModelBundle::from_bytes(&bytes)?;
        let name = bundle.spec.preset.map_or("custom", |p| p.name()).to_string();
        let metrics = pipeline::evaluate_bundle(&bundle, &prep)?;
        (name, bundle.config_hash, metrics)
    } else if bytes.starts_with(BASELINE_MAGIC) {
        let bundle = BaselineBundle::from_bytes(&bytes)?;
        let metrics = pipeline::evaluate_baseline(&bundle, &prep)?;
        (bundle.model.name().to_string(), bundle.config_hash, metrics)
    } else {
        return Err(CliError::Data(format!("{}: not a model bundle", path.display())));
    };
    print_json(&serde_json::json!({"model": model, "config_hash": hash, "metrics": metrics}))
}

fn serve(cfg: &RunConfig, args: &ServeArgs) -> Result<(), CliError> {
    let bind = args
        .bind
        .clone()
        .or_else(|| std::env::var("TRIAGE_BIND").ok())
        .unwrap_or_else(|| cfg.bind.clone());
    let addr: std::net::SocketAddr = bind
        .parse()
        .map_err(|e| CliError::Config(format!("bind address {bind:?}: {e}")))?;
    let loaded = LoadedBundle::load(&args.bundle)?;
    tracing::info!(config_hash = %loaded.bundle.config_hash, checksum = %format!("{:08x}", loaded.checksum), "bundle loaded");
    let options = InductiveOptions {
        allow_clamp: !args.no_clamp,
        ..Default::default()
    };
    let mut state = AppState::new(options, system_clock());
    if let Some(log) = &args.event_log {
        state = state.with_event_log(log).map_err(|e| CliError::runtime("serve", e))?;
    }
    state.install(loaded);
    let opts = RouterOptions {
        static_dir: args.static_dir.clone(),
        cors: args.cors,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime("serve", e))?;
    runtime
        .block_on(triage_service::serve(addr, Arc::new(state), &opts))
        .map_err(|e| CliError::runtime("serve", e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.common)?;
    match &cli.command {
        Command::Preprocess => {
            let artifact = pipeline::run_preprocess(&cfg)?;
            print_json(&serde_json::json!({
                "config_hash": artifact.config_hash,
                "artifact": pipeline::prep_path(&cfg),
                "report": artifact.report,
            }))
        }
        Command::Graph => {
            let (artifact, prep) = pipeline::load_prep(&cfg)?;
            let mut out = Vec::new();
            for &metric in &cfg.metrics {
                let (g, path, cached) = pipeline::graph_for(&cfg, &artifact, &prep, metric)?;
                out.push(serde_json::json!({
                    "metric": metric.name(),
                    "threshold": g.threshold(),
                    "nodes": g.node_count(),
                    "edges": g.edge_count(),
                    "path": path,
                    "cached": cached,
                }));
            }
            print_json(&out)
        }
        Command::Train => {
            let preset = single(&cfg.presets, "preset")?;
            let metric = single(&cfg.metrics, "metric")?;
            let run = pipeline::run_train(&cfg, preset, metric)?;
            print_json(&summary(&run.report))
        }
        Command::Eval { bundle } => eval(&cfg, bundle),
        Command::Grid => {
            let outcome = pipeline::run_grid(&cfg)?;
            let rows: Vec<_> = outcome.reports.iter().map(summary).collect();
            print_json(&serde_json::json!({
                "summary": outcome.summary_path,
                "runs": rows,
                "ordering": outcome.ordering,
                "failures": outcome.failures.iter().map(|(n, e)| format!("{n}: {e}")).collect::<Vec<_>>(),
            }))?;
            if outcome.failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::runtime(
                    "grid",
                    format!("{} run(s) failed", outcome.failures.len()),
                ))
            }
        }
        Command::Serve(args) => serve(&cfg, args),
        Command::Synth { rows, output } => {
            let records = generate(&SyntheticConfig {
                rows: *rows,
                seed: cfg.seed,
                ..Default::default()
            });
            let file = std::fs::File::create(output)
                .map_err(|e| CliError::runtime("synth", format!("{}: {e}", output.display())))?;
            write_csv(&records, file).map_err(CliError::from)
        }
    }
}

fn summary(r: &RunReport) -> serde_json::Value {
    serde_json::json!({
        "model": r.model,
        "graph": r.graph.as_ref().map(|g| g.metric.clone()),
        "config_hash": r.config_hash,
        "test_accuracy": r.test_accuracy(),
        "eval_accuracy": r.metrics.eval.as_ref().map(|m| m.accuracy),
        "best_epoch": r.best_epoch,
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
