use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use carenet_cli::{router, AppState};
use carenet_core::fasl::params::SHIPPED_PARAMETERS;
use carenet_core::fasl::{gate_series, shipped};
use carenet_core::pipeline::{read_likelihoods, run_pipeline, DataDir, DatasetManifest};
use carenet_core::synth::{generate, Scenario};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const DS: &str = "alt";
const USER: &str = "resident-e";

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let path = entry.unwrap().path();
        let dest = to.join(path.file_name().unwrap());
        if path.is_dir() {
            copy_tree(&path, &dest);
        } else {
            fs::copy(&path, &dest).unwrap();
        }
    }
}

/// Every test gets its own copy of one pipeline run.
fn fixture() -> (TempDir, DataDir) {
    static TEMPLATE: OnceLock<TempDir> = OnceLock::new();
    let template = TEMPLATE.get_or_init(|| {
        let scenario = Scenario::builtin("alternating-wake").unwrap();
        let out = generate(&scenario, scenario.seed).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        out.write_to(tmp.path()).unwrap();
        let data = DataDir::new(tmp.path());
        let manifest = DatasetManifest {
            dataset: DS.into(),
            timezone: "UTC".into(),
            delta_secs: scenario.delta_secs,
        };
        run_pipeline(&data, &manifest, &[tmp.path().join("trace.pcap")], None, &shipped()).unwrap();
        tmp
    });
    let tmp = tempfile::tempdir().unwrap();
    copy_tree(template.path(), tmp.path());
    let data = DataDir::new(tmp.path());
    (tmp, data)
}

fn app(data: &DataDir, token: Option<&str>) -> Router {
    let state = AppState::open(data.clone(), None, token.map(str::to_string)).unwrap();
    router(Arc::new(state))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, headers: &[(&str, &str)]) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, None, &[]).await
}

fn shipped_doc() -> Value {
    serde_json::from_str(SHIPPED_PARAMETERS).unwrap()
}

#[tokio::test]
async fn criteria_lists_shipped_configs() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let (status, body) = get(&app, "/api/criteria").await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<u64> = body["criteria"].as_array().unwrap().iter().map(|c| c["criterion_id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![4, 8]);
    assert_eq!(body["config_hash"], shipped().config_hash);
}

#[tokio::test]
async fn likelihoods_read_through_to_disk() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let (status, body) = get(&app, &format!("/api/criteria/4/likelihood?user={USER}&from=2024-05-03&to=2024-05-06")).await;
    assert_eq!(status, StatusCode::OK);
    let served = body["likelihoods"].as_array().unwrap();
    assert_eq!(served.len(), 4);
    let stored: Vec<Value> = read_likelihoods(&data, DS, &shipped().config_hash, USER)
        .unwrap()
        .into_iter()
        .filter(|l| l.criterion == 4 && l.date.to_string().as_str() >= "2024-05-03" && l.date.to_string().as_str() <= "2024-05-06")
        .map(|l| serde_json::to_value(l).unwrap())
        .collect();
    assert_eq!(served, &stored);
}

#[tokio::test]
async fn unknown_criterion_and_user_are_404() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    assert_eq!(get(&app, "/api/criteria/5/likelihood").await.0, StatusCode::NOT_FOUND);
    let (status, body) = get(&app, "/api/gate?user=nobody").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
    assert_eq!(get(&app, "/api/gate?dataset=other").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_config_is_422_with_field_path() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let mut doc = shipped_doc();
    doc["criteria"][1]["components"][0]["features"][0]["mf"]["lo"] = json!(70.0);
    let (status, body) = call(&app, "PUT", "/api/config", Some(doc), &[]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "validation");
    assert_eq!(body["field"], "criteria[1].components[0].features[0].mf.lo");

    let mut doc = shipped_doc();
    doc["gate"]["M"] = json!("fourteen");
    let (status, body) = call(&app, "PUT", "/api/config", Some(doc), &[]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "gate.M");

    let (_, after) = get(&app, "/api/config").await;
    assert_eq!(after["config_hash"], shipped().config_hash);
}

#[tokio::test]
async fn stale_if_match_is_412() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let mut doc = shipped_doc();
    doc["gate"]["theta"] = json!(0.7);
    let (status, _) = call(&app, "PUT", "/api/config", Some(doc.clone()), &[("if-match", "\"0000000000000000\"")]).await;
    assert_eq!(status, StatusCode::PRECONDITION_FAILED);
    let current = format!("\"{}\"", shipped().config_hash);
    let (status, body) = call(&app, "PUT", "/api/config", Some(doc), &[("if-match", &current)]).await;
    assert_eq!(status, StatusCode::OK);
    assert_ne!(body["config_hash"], shipped().config_hash);
}

#[tokio::test]
async fn theta_change_is_reflected_in_gate_and_snapshot() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let (_, before) = get(&app, &format!("/api/gate?user={USER}&as_of=2024-05-14")).await;
    let c4 = &before["users"][0]["criteria"][0];
    assert_eq!(c4["criterion"], 4);
    assert_eq!(c4["present"], true);
    assert_eq!(c4["days"].as_array().unwrap().len(), 14);

    let mut doc = shipped_doc();
    doc["gate"]["theta"] = json!(0.9);
    let (status, put) = call(&app, "PUT", "/api/config", Some(doc), &[]).await;
    assert_eq!(status, StatusCode::OK);
    let new_hash = put["config_hash"].as_str().unwrap().to_string();

    let (_, after) = get(&app, &format!("/api/gate?user={USER}&as_of=2024-05-14")).await;
    assert_eq!(after["config_hash"], new_hash.as_str());
    let c4 = &after["users"][0]["criteria"][0];

    // Offline oracle: the stored likelihoods under the old hash, re-gated at 0.9.
    let mut cfg = shipped().parameters.gate;
    cfg.theta = 0.9;
    let series: Vec<_> = read_likelihoods(&data, DS, &shipped().config_hash, USER)
        .unwrap()
        .into_iter()
        .filter(|l| l.criterion == 4)
        .map(|l| (l.date, l.likelihood))
        .collect();
    let last = gate_series(&series, &cfg).pop().unwrap();
    assert_eq!(c4["positives"], last.positives);
    assert_eq!(c4["present"], last.present);
    assert_eq!(last.positives, 0);

    let (_, episode) = get(&app, &format!("/api/episode?user={USER}&as_of=2024-05-14")).await;
    assert_eq!(episode["snapshots"][0]["elevated"], 0);
    assert_eq!(episode["snapshots"][0]["config_hash"], new_hash.as_str());
}

#[tokio::test]
async fn episode_snapshot_counts_elevated_criteria() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let (status, body) = get(&app, "/api/episode").await;
    assert_eq!(status, StatusCode::OK);
    let snap = &body["snapshots"][0];
    assert_eq!(snap["user_id"], USER);
    assert_eq!(snap["date"], "2024-05-14");
    assert_eq!(snap["elevated"], 1);
    assert_eq!(snap["core_active"], false);
    assert_eq!(snap["episode"], false);
}

#[tokio::test]
async fn features_endpoint() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let (status, body) = get(&app, &format!("/api/features/{USER}/2024-05-02")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["features"]["values"]["C4_F2_WakeAfter0400Min"], 1085.0);
    assert_eq!(get(&app, &format!("/api/features/{USER}/2024-06-01")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, &format!("/api/features/{USER}/May-2")).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn profiles_and_mappings_round_trip() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let (_, profiles) = get(&app, "/api/profiles").await;
    assert_eq!(profiles.as_array().unwrap().len(), 1);

    let mut next = profiles.clone();
    next.as_array_mut().unwrap().push(json!({
        "user_id": "guest",
        "display_name": "Guest",
        "habitual_wake": "08:00:00",
        "habitual_sleep": "23:30:00",
    }));
    let (status, stored) = call(&app, "PUT", "/api/profiles", Some(next), &[]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stored.as_array().unwrap().len(), 2);
    assert_eq!(get(&app, "/api/profiles").await.1, stored);

    let dup = json!([profiles[0].clone(), profiles[0].clone()]);
    assert_eq!(call(&app, "PUT", "/api/profiles", Some(dup), &[]).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, mappings) = get(&app, "/api/mappings").await;
    let m = mappings[0].clone();
    let mut other = m.clone();
    other["user_id"] = json!("guest");
    let overlapping = json!([m, other]);
    let (status, body) = call(&app, "PUT", "/api/mappings", Some(overlapping), &[]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["message"].as_str().unwrap().contains("overlaps"));

    let resp = app
        .clone()
        .oneshot(Request::put("/api/profiles").body(Body::from("{not json")).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn recompute_scores_under_active_hash() {
    let (_tmp, data) = fixture();
    let app = app(&data, None);
    let (status, body) = call(&app, "POST", "/api/recompute", None, &[]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["users"], 1);
    assert_eq!(body["likelihoods"], 28);
    let (status, body) = call(&app, "POST", "/api/recompute", Some(json!({ "reattribute": true })), &[]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["config_hash"], shipped().config_hash);
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let (_tmp, data) = fixture();
    let app = app(&data, Some("s3cret"));
    assert_eq!(get(&app, "/api/criteria").await.0, StatusCode::UNAUTHORIZED);
    let wrong = call(&app, "GET", "/api/criteria", None, &[("authorization", "Bearer nope")]).await;
    assert_eq!(wrong.0, StatusCode::UNAUTHORIZED);
    let ok = call(&app, "GET", "/api/criteria", None, &[("authorization", "Bearer s3cret")]).await;
    assert_eq!(ok.0, StatusCode::OK);
}
