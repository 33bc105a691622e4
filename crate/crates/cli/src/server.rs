//! JSON HTTP surface over a data directory.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use carenet_core::fasl::{validate, DailyLikelihood, GateDay, LoadedParameters, ParameterSet, ValidationError};
use carenet_core::identity::{IpMapping, RegistryError, RegistryStore, UserProfile};
use carenet_core::pipeline::{
    self, read_gates, read_likelihoods, snapshot_at, DataDir, IndicatorSnapshot, PipelineError,
};
use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub struct AppState {
    data: DataDir,
    default_dataset: Option<String>,
    token: Option<String>,
    params: RwLock<Arc<LoadedParameters>>,
    registry: RegistryStore,
    /// Serialises config writes and recomputation.
    writer: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn open(data: DataDir, default_dataset: Option<String>, token: Option<String>) -> Result<Self, PipelineError> {
        let params = data.parameters()?;
        let registry = RegistryStore::open(data.root())?;
        Ok(AppState {
            data,
            default_dataset,
            token,
            params: RwLock::new(Arc::new(params)),
            registry,
            writer: tokio::sync::Mutex::new(()),
        })
    }

    fn params(&self) -> Arc<LoadedParameters> {
        self.params.read().expect("parameter lock").clone()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/criteria", get(criteria))
        .route("/api/criteria/:k/likelihood", get(likelihood))
        .route("/api/gate", get(gate))
        .route("/api/episode", get(episode))
        .route("/api/config", get(get_config).put(put_config))
        .route("/api/profiles", get(get_profiles).put(put_profiles))
        .route("/api/mappings", get(get_mappings).put(put_mappings))
        .route("/api/features/:user/:date", get(features))
        .route("/api/recompute", post(recompute))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(field) = self.field {
            body["field"] = field.into();
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "validation",
            message: e.message,
            field: Some(e.field),
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string()),
            other => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", other.to_string()),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(v) => v.into(),
            PipelineError::MissingInput(m) => Self::not_found(m),
            PipelineError::BadName(m) => Self::bad_request(m),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn auth(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

/// JSON body parsing that reports errors in the common error shape.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
struct Scope {
    dataset: Option<String>,
    user: Option<String>,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    as_of: Option<NaiveDate>,
}

impl AppState {
    fn dataset(&self, requested: Option<&str>) -> ApiResult<String> {
        let all = self.data.datasets()?;
        if let Some(ds) = requested.or(self.default_dataset.as_deref()) {
            if !all.iter().any(|d| d == ds) {
                return Err(ApiError::not_found(format!("unknown dataset {ds:?}")));
            }
            return Ok(ds.to_string());
        }
        match all.as_slice() {
            [only] => Ok(only.clone()),
            [] => Err(ApiError::not_found("no dataset has been ingested")),
            _ => Err(ApiError::bad_request("several datasets exist; pass ?dataset=")),
        }
    }

    fn users(&self, ds: &str, hash: &str, user: Option<&str>) -> ApiResult<Vec<String>> {
        let scored = self.data.scored_users(ds, hash)?;
        match user {
            Some(u) if scored.iter().any(|s| s == u) => Ok(vec![u.to_string()]),
            Some(u) => Err(ApiError::not_found(format!("no scores for user {u:?}"))),
            None => Ok(scored),
        }
    }

    /// Makes sure derived layers exist for the active config hash.
    async fn ensure_scored(self: &Arc<Self>, ds: &str) -> ApiResult<Arc<LoadedParameters>> {
        let params = self.params();
        if self.data.scored_users(ds, &params.config_hash)?.is_empty()
            && !self.data.feature_users(ds)?.is_empty()
        {
            let _guard = self.writer.lock().await;
            let params = self.params();
            if self.data.scored_users(ds, &params.config_hash)?.is_empty() {
                let data = self.data.clone();
                let ds = ds.to_string();
                let p = params.clone();
                tokio::task::spawn_blocking(move || pipeline::score(&data, &ds, &p, None))
                    .await
                    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
            }
            return Ok(params);
        }
        Ok(params)
    }
}

async fn criteria(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let p = state.params();
    Json(json!({ "config_hash": p.config_hash, "criteria": p.parameters.criteria }))
}

async fn likelihood(
    State(state): State<Arc<AppState>>,
    Path(k): Path<u8>,
    Query(q): Query<Scope>,
) -> ApiResult<Json<serde_json::Value>> {
    let ds = state.dataset(q.dataset.as_deref())?;
    let params = state.ensure_scored(&ds).await?;
    if params.parameters.criterion(k).is_none() {
        return Err(ApiError::not_found(format!("criterion {k} is not configured")));
    }
    let mut rows: Vec<DailyLikelihood> = Vec::new();
    for user in state.users(&ds, &params.config_hash, q.user.as_deref())? {
        rows.extend(
            read_likelihoods(&state.data, &ds, &params.config_hash, &user)?
                .into_iter()
                .filter(|l| l.criterion == k)
                .filter(|l| q.from.is_none_or(|f| l.date >= f) && q.to.is_none_or(|t| l.date <= t)),
        );
    }
    Ok(Json(json!({
        "dataset": ds,
        "config_hash": params.config_hash,
        "criterion": k,
        "likelihoods": rows,
    })))
}

#[derive(Debug, Serialize)]
struct GateView {
    criterion: u8,
    present: bool,
    positives: u32,
    observed: u32,
    /// One entry per calendar day of the window, oldest first; days without
    /// a stored score have no likelihood and no indicator.
    days: Vec<GateDay>,
}

#[derive(Debug, Serialize)]
struct UserGate {
    user_id: String,
    as_of: Option<NaiveDate>,
    criteria: Vec<GateView>,
}

async fn gate(State(state): State<Arc<AppState>>, Query(q): Query<Scope>) -> ApiResult<Json<serde_json::Value>> {
    let ds = state.dataset(q.dataset.as_deref())?;
    let params = state.ensure_scored(&ds).await?;
    let m = params.parameters.gate.m as i64;
    let mut out = Vec::new();
    for user in state.users(&ds, &params.config_hash, q.user.as_deref())? {
        let gates = read_gates(&state.data, &ds, &params.config_hash, &user)?;
        let as_of = q.as_of.or_else(|| gates.iter().map(|g| g.day.date).max());
        let mut criteria = Vec::new();
        if let Some(as_of) = as_of {
            for crit in &params.parameters.criteria {
                let k = crit.criterion_id;
                let by_date: BTreeMap<NaiveDate, &GateDay> = gates
                    .iter()
                    .filter(|g| g.criterion == k)
                    .map(|g| (g.day.date, &g.day))
                    .collect();
                let today = by_date.get(&as_of);
                let days = (0..m)
                    .rev()
                    .map(|back| {
                        let d = as_of - Duration::days(back);
                        by_date.get(&d).map(|g| (*g).clone()).unwrap_or(GateDay {
                            date: d,
                            likelihood: None,
                            indicator: None,
                            positives: 0,
                            observed: 0,
                            present: false,
                        })
                    })
                    .collect();
                criteria.push(GateView {
                    criterion: k,
                    present: today.is_some_and(|g| g.present),
                    positives: today.map_or(0, |g| g.positives),
                    observed: today.map_or(0, |g| g.observed),
                    days,
                });
            }
        }
        out.push(UserGate {
            user_id: user,
            as_of,
            criteria,
        });
    }
    Ok(Json(json!({
        "dataset": ds,
        "config_hash": params.config_hash,
        "gate": params.parameters.gate,
        "users": out,
    })))
}

async fn episode(State(state): State<Arc<AppState>>, Query(q): Query<Scope>) -> ApiResult<Json<serde_json::Value>> {
    let ds = state.dataset(q.dataset.as_deref())?;
    let params = state.ensure_scored(&ds).await?;
    let mut snapshots: Vec<IndicatorSnapshot> = Vec::new();
    for user in state.users(&ds, &params.config_hash, q.user.as_deref())? {
        let likelihoods = read_likelihoods(&state.data, &ds, &params.config_hash, &user)?;
        let gates = read_gates(&state.data, &ds, &params.config_hash, &user)?;
        let as_of = q.as_of.or_else(|| gates.iter().map(|g| g.day.date).max());
        snapshots.push(snapshot_at(&user, &ds, &params, &likelihoods, &gates, as_of));
    }
    Ok(Json(json!({
        "dataset": ds,
        "config_hash": params.config_hash,
        "snapshots": snapshots,
    })))
}

fn config_body(p: &LoadedParameters) -> Response {
    let mut resp = Json(json!({
        "config_hash": p.config_hash,
        "warnings": p.warnings,
        "parameters": p.parameters,
    }))
    .into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("\"{}\"", p.config_hash)) {
        resp.headers_mut().insert(header::ETAG, v);
    }
    resp
}

async fn get_config(State(state): State<Arc<AppState>>) -> Response {
    config_body(&state.params())
}

/// Replaces the parameter set. An `If-Match` header naming a different
/// config hash is refused so concurrent edits are not lost.
async fn put_config(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> ApiResult<Response> {
    let set: ParameterSet = {
        let de = &mut serde_json::Deserializer::from_slice(&body);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ApiError::from(ValidationError {
                field: if path == "." { String::new() } else { path },
                message: e.into_inner().to_string(),
            })
        })?
    };
    let loaded = validate(set)?;
    let _guard = state.writer.lock().await;
    let current = state.params();
    if let Some(expected) = headers.get(header::IF_MATCH).and_then(|v| v.to_str().ok()) {
        let expected = expected.trim().trim_matches('"');
        if expected != "*" && expected != current.config_hash {
            return Err(ApiError::new(
                StatusCode::PRECONDITION_FAILED,
                "stale_config",
                format!("config is now {}, not {expected}", current.config_hash),
            ));
        }
    }
    state.data.save_parameters(&loaded.parameters)?;
    let loaded = Arc::new(loaded);
    *state.params.write().expect("parameter lock") = loaded.clone();
    Ok(config_body(&loaded))
}

async fn get_profiles(State(state): State<Arc<AppState>>) -> Json<Vec<UserProfile>> {
    Json(state.registry.snapshot().profiles().cloned().collect())
}

fn now_micros() -> i64 {
    chrono::Utc::now().timestamp_micros()
}

async fn put_profiles(State(state): State<Arc<AppState>>, body: axum::body::Bytes) -> ApiResult<Json<Vec<UserProfile>>> {
    let profiles: Vec<UserProfile> = parse_body(&body)?;
    let _guard = state.writer.lock().await;
    let next = state.registry.update(now_micros(), |r| r.replace_profiles(profiles))?;
    Ok(Json(next.profiles().cloned().collect()))
}

async fn get_mappings(State(state): State<Arc<AppState>>) -> Json<Vec<IpMapping>> {
    Json(state.registry.snapshot().mappings().to_vec())
}

async fn put_mappings(State(state): State<Arc<AppState>>, body: axum::body::Bytes) -> ApiResult<Json<Vec<IpMapping>>> {
    let mappings: Vec<IpMapping> = parse_body(&body)?;
    let _guard = state.writer.lock().await;
    let next = state.registry.update(now_micros(), |r| r.replace_mappings(mappings))?;
    Ok(Json(next.mappings().to_vec()))
}

async fn features(
    State(state): State<Arc<AppState>>,
    Path((user, date)): Path<(String, String)>,
    Query(q): Query<Scope>,
) -> ApiResult<Json<serde_json::Value>> {
    let date: NaiveDate = date
        .parse()
        .map_err(|_| ApiError::bad_request(format!("bad date {date:?}, expected YYYY-MM-DD")))?;
    let ds = state.dataset(q.dataset.as_deref())?;
    match state.data.read_features(&ds, &user, date)? {
        Some(v) => Ok(Json(json!({ "dataset": ds, "features": v }))),
        None => Err(ApiError::not_found(format!("no features for {user} on {date}"))),
    }
}

#[derive(Debug, Default, Deserialize)]
struct RecomputeRequest {
    dataset: Option<String>,
    /// Also rebuild summaries and features from stored partitions, for use
    /// after a mapping change.
    #[serde(default)]
    reattribute: bool,
}

async fn recompute(State(state): State<Arc<AppState>>, body: axum::body::Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: RecomputeRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RecomputeRequest::default()
    } else {
        parse_body(&body)?
    };
    let ds = state.dataset(req.dataset.as_deref())?;
    let _guard = state.writer.lock().await;
    let params = state.params();
    let data = state.data.clone();
    let p = params.clone();
    let ds2 = ds.clone();
    let scores = tokio::task::spawn_blocking(move || -> Result<_, PipelineError> {
        if req.reattribute {
            pipeline::reattribute(&data, &ds2)?;
            pipeline::compute_features(&data, &ds2, None, p.parameters.gate.validity_threshold)?;
        }
        pipeline::score(&data, &ds2, &p, None)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(json!({
        "dataset": ds,
        "config_hash": params.config_hash,
        "users": scores.len(),
        "likelihoods": scores.iter().map(|s| s.likelihoods.len()).sum::<usize>(),
    })))
}

pub async fn serve(addr: &str, state: Arc<AppState>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
