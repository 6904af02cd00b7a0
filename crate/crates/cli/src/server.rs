//! HTTP facade under `/v1`.
//!
//! Knowledge is served from an immutable snapshot; a rebuild mines the
//! records queued by `/ingest`, folds them into the current documents and
//! swaps the snapshot in one step. The model is read-only at serve time.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use apifk_core::knowledge::{self, merge_daily, mine_knowledge, ApiKnowledge, ConstraintCheck, MineConfig};
use apifk_core::log_model::{parse_record, LogError};
use apifk_core::metrics::compute_sr;
use apifk_core::{ApiCallRecord, ConvNetModel, OutcomeLabel, Scenario, SuccessRateReport};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

pub const DEFAULT_PRODUCERS: usize = 5;
const CONSOLE_SESSION: &str = "console";

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Snapshot = Arc<BTreeMap<String, ApiKnowledge>>;

pub struct AppState {
    knowledge: RwLock<Snapshot>,
    model: Option<Arc<ConvNetModel>>,
    scenario: Scenario,
    knowledge_dir: Option<PathBuf>,
    mine: MineConfig,
    calls: Mutex<Vec<ApiCallRecord>>,
    pending: Mutex<Vec<ApiCallRecord>>,
    rebuilding: AtomicBool,
    clock: AtomicU64,
}

/// Held while a rebuild runs; ingest is refused until it drops.
pub struct RebuildGuard<'a>(&'a AtomicBool);

impl Drop for RebuildGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RebuildSummary {
    pub records: usize,
    pub apis: Vec<String>,
}

impl AppState {
    pub fn new(
        knowledge: BTreeMap<String, ApiKnowledge>,
        model: Option<ConvNetModel>,
        scenario: Scenario,
        knowledge_dir: Option<PathBuf>,
        mine: MineConfig,
    ) -> Self {
        AppState {
            knowledge: RwLock::new(Arc::new(knowledge)),
            model: model.map(Arc::new),
            scenario,
            knowledge_dir,
            mine,
            calls: Mutex::new(Vec::new()),
            pending: Mutex::new(Vec::new()),
            rebuilding: AtomicBool::new(false),
            clock: AtomicU64::new(0),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        self.knowledge.read().expect("knowledge lock").clone()
    }

    /// Records executed through `/call`, in order.
    pub fn calls(&self) -> Vec<ApiCallRecord> {
        self.calls.lock().expect("calls lock").clone()
    }

    pub fn pending(&self) -> usize {
        self.pending.lock().expect("pending lock").len()
    }

    pub fn try_begin_rebuild(&self) -> Option<RebuildGuard<'_>> {
        self.rebuilding
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .ok()
            .map(|_| RebuildGuard(&self.rebuilding))
    }

    /// Mines the queued records and merges them into the served knowledge.
    pub fn rebuild(&self) -> Result<RebuildSummary, ApiError> {
        let _guard = self
            .try_begin_rebuild()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "a rebuild is already running"))?;
        let batch = std::mem::take(&mut *self.pending.lock().expect("pending lock"));
        if batch.is_empty() {
            return Ok(RebuildSummary { records: 0, apis: Vec::new() });
        }
        let catalog = self.scenario.catalog().map_err(|e| ApiError::internal(e.to_string()))?;
        let mined = mine_knowledge(&batch, &catalog, &self.mine).map_err(|e| ApiError::internal(e.to_string()))?;
        let current = self.snapshot();
        let mut next = (*current).clone();
        let mut touched = Vec::new();
        for doc in mined.into_iter().filter(|d| d.record_count > 0) {
            let merged = match current.get(&doc.api) {
                Some(old) => merge_daily(old, &doc, &self.mine).map_err(|e| ApiError::internal(e.to_string()))?,
                None => doc,
            };
            touched.push(merged.api.clone());
            next.insert(merged.api.clone(), merged);
        }
        if let Some(dir) = &self.knowledge_dir {
            let docs: Vec<ApiKnowledge> = touched.iter().map(|a| next[a].clone()).collect();
            knowledge::save_all(dir, &docs).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        *self.knowledge.write().expect("knowledge lock") = Arc::new(next);
        Ok(RebuildSummary {
            records: batch.len(),
            apis: touched,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/apis", get(list_apis))
        .route("/v1/apis/:name/knowledge", get(get_knowledge))
        .route("/v1/apis/:name/params/:param/producers", get(producers))
        .route("/v1/predict", post(predict))
        .route("/v1/call", post(call))
        .route("/v1/ingest", post(ingest))
        .route("/v1/rebuild", post(rebuild))
        .route("/v1/metrics/sr", get(success_rate))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Serialize)]
struct ApiSummary {
    api: String,
    has_knowledge: bool,
    simulated: bool,
    record_count: u64,
    success_count: u64,
    params: Vec<String>,
}

async fn list_apis(State(state): State<Arc<AppState>>) -> Json<Vec<ApiSummary>> {
    let snapshot = state.snapshot();
    let mut names: Vec<&str> = snapshot.keys().map(String::as_str).collect();
    names.extend(state.scenario.apis.iter().map(|a| a.spec.name.as_str()));
    names.sort_unstable();
    names.dedup();
    let apis = names
        .into_iter()
        .map(|name| {
            let doc = snapshot.get(name);
            let params = match (doc, state.scenario.api(name)) {
                (Some(d), _) => d.params.keys().cloned().collect(),
                (None, Some(a)) => a.spec.input_params.iter().map(|p| p.name.clone()).collect(),
                (None, None) => Vec::new(),
            };
            ApiSummary {
                api: name.to_string(),
                has_knowledge: doc.is_some(),
                simulated: state.scenario.api(name).is_some(),
                record_count: doc.map_or(0, |d| d.record_count),
                success_count: doc.map_or(0, |d| d.success_count),
                params,
            }
        })
        .collect();
    Json(apis)
}

async fn get_knowledge(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> Result<Response, ApiError> {
    let snapshot = state.snapshot();
    let doc = snapshot
        .get(&name)
        .ok_or_else(|| ApiError::not_found(format!("no knowledge for api {name}")))?;
    Ok(Json(doc).into_response())
}

#[derive(Deserialize)]
struct ProducerQuery {
    k: Option<usize>,
}

async fn producers(
    State(state): State<Arc<AppState>>,
    Path((name, param)): Path<(String, String)>,
    Query(q): Query<ProducerQuery>,
) -> Result<Json<Value>, ApiError> {
    let snapshot = state.snapshot();
    let doc = snapshot
        .get(&name)
        .ok_or_else(|| ApiError::not_found(format!("no knowledge for api {name}")))?;
    if !doc.params.contains_key(&param) {
        return Err(ApiError::not_found(format!("{name} has no parameter {param}")));
    }
    let edges = doc.producers(&param, q.k.unwrap_or(DEFAULT_PRODUCERS));
    Ok(Json(json!({ "api": name, "param": param, "producers": edges })))
}

/// Body of `/predict` and `/call`.
pub struct CallBody {
    pub api: String,
    pub params: Vec<(String, String)>,
    pub session: Option<String>,
}

pub fn parse_call_body(bytes: &[u8]) -> Result<CallBody, ApiError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ApiError::bad_request("body must be a JSON object"))?;
    let api = match obj.get("api") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        _ => return Err(ApiError::bad_request("`api` must be a non-empty string")),
    };
    let params = match obj.get("params") {
        None => Vec::new(),
        Some(Value::Object(m)) => m
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.clone(), s.clone())),
                _ => Err(ApiError::bad_request(format!("parameter `{k}` must be a string"))),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(ApiError::bad_request("`params` must be an object")),
    };
    let session = match obj.get("session") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(ApiError::bad_request("`session` must be a string")),
    };
    Ok(CallBody { api, params, session })
}

#[derive(Serialize)]
struct LabelProbability {
    label: OutcomeLabel,
    probability: f64,
}

#[derive(Serialize)]
struct PredictionBody {
    label: OutcomeLabel,
    probability: f64,
    probabilities: Vec<LabelProbability>,
}

#[derive(Serialize)]
struct PredictResponse {
    api: String,
    prediction: Option<PredictionBody>,
    checks: Vec<ConstraintCheck>,
    violations: Vec<ConstraintCheck>,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req = parse_call_body(&body)?;
    let snapshot = state.snapshot();
    let doc = snapshot.get(&req.api);
    if doc.is_none() && state.scenario.api(&req.api).is_none() {
        return Err(ApiError::not_found(format!("unknown api {}", req.api)));
    }
    let prediction = match &state.model {
        Some(model) => {
            let record = ApiCallRecord {
                api: req.api.clone(),
                params: req.params.clone(),
                outcome: OutcomeLabel::Right,
                session_id: String::new(),
                timestamp: 0,
            };
            let p = model.predict(&record).map_err(|e| ApiError::internal(e.to_string()))?;
            Some(PredictionBody {
                label: p.label,
                probability: p.probability,
                probabilities: p
                    .probabilities
                    .into_iter()
                    .map(|(label, probability)| LabelProbability { label, probability })
                    .collect(),
            })
        }
        None => None,
    };
    let checks = doc.map(|d| d.check(&req.params)).unwrap_or_default();
    let violations = checks.iter().filter(|c| !c.passed).cloned().collect();
    let resp = PredictResponse {
        api: req.api,
        prediction,
        checks,
        violations,
    };
    Ok(Json(serde_json::to_value(resp).map_err(|e| ApiError::internal(e.to_string()))?))
}

async fn call(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req = parse_call_body(&body)?;
    let outcome = state
        .scenario
        .execute(&req.api, &req.params)
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    let record = ApiCallRecord {
        api: req.api.clone(),
        params: req.params,
        outcome: outcome.clone(),
        session_id: req.session.unwrap_or_else(|| CONSOLE_SESSION.to_string()),
        timestamp: state.clock.fetch_add(1, Ordering::SeqCst),
    };
    let index = {
        let mut calls = state.calls.lock().expect("calls lock");
        calls.push(record.clone());
        calls.len() - 1
    };
    state.pending.lock().expect("pending lock").push(record);
    Ok(Json(json!({
        "api": req.api,
        "outcome": outcome,
        "success": outcome.is_right(),
        "call_index": index,
    })))
}

/// Canonical log lines, either newline-delimited or as a JSON array.
fn parse_ingest_body(text: &str) -> Result<Vec<ApiCallRecord>, LogError> {
    if text.trim_start().starts_with('[') {
        let items: Vec<Value> = serde_json::from_str(text).map_err(|e| LogError::MalformedRecord {
            line: 0,
            reason: e.to_string(),
        })?;
        items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_record(&v.to_string(), i + 1))
            .collect()
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| parse_record(l, i + 1))
            .collect()
    }
}

async fn ingest(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    if state.rebuilding.load(Ordering::SeqCst) {
        return Err(ApiError::new(StatusCode::CONFLICT, "knowledge rebuild in progress"));
    }
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let records = parse_ingest_body(text).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let accepted = records.len();
    let mut pending = state.pending.lock().expect("pending lock");
    pending.extend(records);
    Ok(Json(json!({ "accepted": accepted, "pending": pending.len() })))
}

async fn rebuild(State(state): State<Arc<AppState>>) -> Result<Json<RebuildSummary>, ApiError> {
    let worker = state.clone();
    tokio::task::spawn_blocking(move || worker.rebuild())
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

async fn success_rate(State(state): State<Arc<AppState>>) -> Json<SuccessRateReport> {
    Json(compute_sr(state.calls.lock().expect("calls lock").iter()))
}
