#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use triage_core::gnn::{InductiveOptions, ModelBundle, Preset, TrainConfig};
use triage_core::ingest::synthetic::{generate, SyntheticConfig};
use triage_core::ingest::{clean, impute_smoking_unknown, preprocess, PatientRecord, PreprocessConfig};
use triage_core::simgraph::Metric;
use triage_service::{router, AppState, Clock, LoadedBundle, RouterOptions};

pub mod scenarios;

pub struct Fixture {
    pub bytes: Vec<u8>,
    pub records: Vec<PatientRecord>,
}

/// A small SAGE bundle trained on synthetic patients, built once per binary.
pub fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let raw = generate(&SyntheticConfig {
            rows: 118,
            seed: 21,
            label_noise: 0.0,
            ..Default::default()
        });
        let (records, _) = impute_smoking_unknown(clean(raw.clone()).records).unwrap();
        let prep = preprocess(
            raw,
            &PreprocessConfig {
                seed: 21,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: Some(20),
            seed: 21,
            ..Default::default()
        };
        let bundle = ModelBundle::fit(
            &prep,
            Metric::Cosine,
            None,
            &Preset::Sage.spec(),
            &cfg,
            "5eed5eed5eed5eed".into(),
        )
        .unwrap();
        Fixture {
            bytes: bundle.to_bytes(),
            records,
        }
    })
}

/// Request body for a record; the label is not part of the request schema.
pub fn patient_json(r: &PatientRecord) -> serde_json::Value {
    let unlabelled = PatientRecord {
        label: None,
        ..r.clone()
    };
    serde_json::to_value(unlabelled).unwrap()
}

/// Arrival times 1000, 2000, … in request order.
pub fn ticking_clock() -> Clock {
    let t = Arc::new(AtomicU64::new(0));
    Arc::new(move || (t.fetch_add(1, Ordering::SeqCst) + 1) * 1000)
}

pub fn state(loaded: bool, options: InductiveOptions) -> Arc<AppState> {
    let state = AppState::new(options, ticking_clock());
    if loaded {
        state.install(LoadedBundle::from_bytes(&fixture().bytes, None).unwrap());
    }
    Arc::new(state)
}

pub fn app(state: Arc<AppState>) -> Router {
    router(state, &RouterOptions::default())
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            Body::from(b)
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

/// Compares against `crates/service/tests/golden/<name>.json`; set `UPDATE_GOLDEN=1` to rewrite.
pub fn golden(name: &str, status: StatusCode, body: &[u8]) {
    let value: serde_json::Value = serde_json::from_slice(body).unwrap();
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&serde_json::json!({"status": status.as_u16(), "body": value})).unwrap()
    );
    // resolves from this crate and from crates that include these helpers
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../service/tests/golden")
        .join(format!("{name}.json"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1 to create)", path.display()));
    assert_eq!(text, expected, "golden file {name} differs");
}
