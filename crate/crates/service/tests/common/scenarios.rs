//! Endpoint scenarios shared by the API tests and the acceptance suite.

use axum::http::{Method, StatusCode};
use serde_json::value::RawValue;

use super::{app, call, fixture, golden, patient_json, state};
use triage_core::gnn::{InductiveOptions, ModelBundle};
use triage_service::Verdict;

fn strict() -> InductiveOptions {
    InductiveOptions {
        allow_clamp: false,
        ..Default::default()
    }
}

pub async fn submit(app: &axum::Router, index: usize) -> (StatusCode, Vec<u8>) {
    let body = patient_json(&fixture().records[index]).to_string();
    call(app, Method::POST, "/api/v1/triage", Some(body)).await
}

pub async fn endpoints_before_a_bundle_is_loaded() {
    let app = app(state(false, InductiveOptions::default()));
    let (status, body) = call(&app, Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    golden("healthz_unloaded", status, &body);
    let (status, body) = call(&app, Method::GET, "/api/v1/model", None).await;
    golden("model_unloaded", status, &body);
    let (status, body) = submit(&app, 0).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    golden("triage_unloaded", status, &body);
}

pub async fn health_and_model_card() {
    let app = app(state(true, InductiveOptions::default()));
    let (status, body) = call(&app, Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    golden("healthz", status, &body);

    let (status, body) = call(&app, Method::GET, "/api/v1/model", None).await;
    assert_eq!(status, StatusCode::OK);
    let card: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert!(["GCN_COS_MAN", "GCN_EUC", "GAT", "SAGE"].contains(&card["preset"].as_str().unwrap()));
    assert_eq!(card["config_hash"], "5eed5eed5eed5eed");
    golden("model", status, &body);
}

pub async fn triage_classifies_and_enqueues() {
    let app = app(state(true, InductiveOptions::default()));
    let (status, body) = submit(&app, 3).await;
    assert_eq!(status, StatusCode::CREATED);
    golden("triage_created", status, &body);

    let resp: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let verdict: Verdict = serde_json::from_value(resp["verdict"].clone()).unwrap();
    let s = verdict.scores;
    assert!((s.red + s.orange + s.yellow + s.green - 1.0).abs() < 1e-9);

    // same answer as the library's inductive path
    let bundle = ModelBundle::from_bytes(&fixture().bytes).unwrap();
    let direct = bundle
        .predict_inductive(&fixture().records[3], &InductiveOptions::default())
        .unwrap();
    assert_eq!(verdict, Verdict::new(direct, "5eed5eed5eed5eed"));
}

pub async fn malformed_patients_name_the_field() {
    let app = app(state(true, strict()));
    let mut missing = patient_json(&fixture().records[0]);
    missing.as_object_mut().unwrap().remove("bmi");
    let (status, body) = call(&app, Method::POST, "/api/v1/triage", Some(missing.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(err["field"], "bmi");
    golden("triage_missing_field", status, &body);

    let mut unseen = patient_json(&fixture().records[0]);
    unseen["smoking_status"] = "pipe".into();
    let (status, body) = call(&app, Method::POST, "/api/v1/triage", Some(unseen.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    golden("triage_bad_category", status, &body);

    let mut wrong_type = patient_json(&fixture().records[0]);
    wrong_type["age"] = "old".into();
    let (status, body) = call(&app, Method::POST, "/api/v1/triage", Some(wrong_type.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    golden("triage_wrong_type", status, &body);

    let (status, body) = call(&app, Method::POST, "/api/v1/triage", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        serde_json::from_slice::<serde_json::Value>(&body).unwrap()["error"],
        "malformed_body"
    );

    let mut far = patient_json(&fixture().records[0]);
    far["age"] = 150.0.into();
    let (status, body) = call(&app, Method::POST, "/api/v1/triage", Some(far.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    golden("triage_out_of_range", status, &body);

    let (_, queue) = call(&app, Method::GET, "/api/v1/queue", None).await;
    assert_eq!(queue, b"[]");
}

pub async fn queue_orders_by_urgency_then_arrival_and_guards_transitions() {
    let app = app(state(true, InductiveOptions::default()));
    for i in [0, 1, 2, 3] {
        assert_eq!(submit(&app, i).await.0, StatusCode::CREATED);
    }
    let (status, body) = call(&app, Method::GET, "/api/v1/queue", None).await;
    assert_eq!(status, StatusCode::OK);
    golden("queue", status, &body);
    let entries: Vec<triage_service::QueueEntry> = serde_json::from_slice(&body).unwrap();
    assert!(entries.windows(2).all(|w| w[0].ordering_key() <= w[1].ordering_key()));

    let status_body = |s: &str| Some(format!(r#"{{"status":"{s}"}}"#));
    let (status, body) = call(
        &app,
        Method::POST,
        "/api/v1/queue/2/status",
        status_body("in-treatment"),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    golden("status_updated", status, &body);
    let (status, _) = call(&app, Method::POST, "/api/v1/queue/2/status", status_body("discharged")).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, Method::POST, "/api/v1/queue/2/status", status_body("waiting")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    golden("status_conflict", status, &body);
    let (status, body) = call(
        &app,
        Method::POST,
        "/api/v1/queue/99/status",
        status_body("in-treatment"),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    golden("status_not_found", status, &body);
    let (status, _) = call(&app, Method::POST, "/api/v1/queue/1/status", status_body("asleep")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

pub async fn concurrent_identical_requests_get_identical_verdicts() {
    let app = app(state(true, InductiveOptions::default()));
    let body = patient_json(&fixture().records[5]).to_string();
    let tasks: Vec<_> = (0..100)
        .map(|_| {
            let app = app.clone();
            let body = body.clone();
            tokio::spawn(async move { call(&app, Method::POST, "/api/v1/triage", Some(body)).await })
        })
        .collect();

    #[derive(serde::Deserialize)]
    struct Raw<'a> {
        entry_id: u64,
        #[serde(borrow)]
        verdict: &'a RawValue,
    }
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, bytes) = t.await.unwrap();
        assert_eq!(status, StatusCode::CREATED);
        bodies.push(bytes);
    }
    let parsed: Vec<Raw> = bodies.iter().map(|b| serde_json::from_slice(b).unwrap()).collect();
    let first = parsed[0].verdict.get();
    assert!(parsed.iter().all(|p| p.verdict.get() == first));
    let mut ids: Vec<u64> = parsed.iter().map(|p| p.entry_id).collect();
    ids.sort_unstable();
    assert_eq!(ids, (1..=100).collect::<Vec<_>>());
}

pub async fn corrupted_bundles_do_not_load() {
    let mut bytes = fixture().bytes.clone();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    assert!(triage_service::LoadedBundle::from_bytes(&bytes, None).is_err());
}
