//! HTTP API over the experiment store, optimizer and scheduler.
//!
//! All routes live under `/v1` and take a bearer token. Errors carry a JSON
//! body `{"error": <code>, "detail": <text>}`. Mutating routes honour an
//! `Idempotency-Key` header: a repeated key from the same user on the same
//! route replays the first response.

pub mod auth;
mod runs;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use oed::config::RunConfig;
use oed::optimizer::{fit_models, predict_design, OptimizerError};
use oed::problem::{Design, Problem, ProblemError};
use oed::store::{Experiment, RecordFilter, Status, Store, StoreError};

pub use auth::{Action, Permissions, Role, UserAccount, UserDb, UsersFile};
pub use runs::{RunRequest, RunState, RunStatus};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
    pub extra: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
            extra: None,
        }
    }

    fn with(mut self, extra: Value) -> Self {
        self.extra = Some(extra);
        self
    }

    fn body(&self) -> Value {
        let mut body = json!({"error": self.code, "detail": self.detail});
        if let (Some(Value::Object(extra)), Some(obj)) = (&self.extra, body.as_object_mut()) {
            obj.extend(extra.clone());
        }
        body
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

fn problem_error(e: &ProblemError) -> ApiError {
    match e {
        ProblemError::Invalid(v) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_problem", e.to_string())
            .with(json!({"violations": v})),
        _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_design", e.to_string()),
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StatusCode as S;
        let detail = e.to_string();
        match &e {
            StoreError::UnknownExperiment(_) => ApiError::new(S::NOT_FOUND, "not_found", detail),
            StoreError::UnknownRecord(_) => ApiError::new(S::NOT_FOUND, "not_found", detail),
            StoreError::NameConflict(_) => ApiError::new(S::CONFLICT, "name_conflict", detail),
            StoreError::IllegalTransition { .. } => ApiError::new(S::CONFLICT, "illegal_transition", detail),
            StoreError::Problem(p) => problem_error(p),
            StoreError::InvalidDesign { .. } => ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_design", detail),
            StoreError::InvalidPayload { .. } => ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_payload", detail),
            StoreError::InvalidName(_) | StoreError::Config(_) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_request", detail)
            }
            StoreError::Integrity(_) | StoreError::SchemaVersion { .. } | StoreError::Io(_) => {
                ApiError::new(S::INTERNAL_SERVER_ERROR, "internal", detail)
            }
        }
    }
}

impl From<OptimizerError> for ApiError {
    fn from(e: OptimizerError) -> Self {
        match &e {
            OptimizerError::Problem(p) => problem_error(p),
            OptimizerError::NoModel => ApiError::new(StatusCode::CONFLICT, "no_model", e.to_string()),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "model_error", e.to_string()),
        }
    }
}

type ApiResult = Result<(StatusCode, Value), ApiError>;

type CachedResponse = Arc<tokio::sync::Mutex<Option<(StatusCode, Value)>>>;

pub struct AppState {
    store: Arc<Store>,
    users: RwLock<UserDb>,
    runs: Mutex<BTreeMap<String, runs::RunHandle>>,
    idempotency: Mutex<HashMap<(String, String, String), CachedResponse>>,
}

impl AppState {
    pub fn new(store: Arc<Store>, users: UserDb) -> Arc<Self> {
        Arc::new(Self {
            store,
            users: RwLock::new(users),
            runs: Mutex::new(BTreeMap::new()),
            idempotency: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    fn authorize(&self, headers: &HeaderMap, action: Action) -> Result<UserAccount, ApiError> {
        let token = headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthenticated", "missing bearer token"))?;
        let users = self.users.read().unwrap_or_else(|p| p.into_inner());
        let user = users
            .authenticate(token)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthenticated", "unknown token"))?;
        if !users.permissions().allows(user.role, action) {
            return Err(ApiError::new(
                StatusCode::FORBIDDEN,
                "forbidden",
                format!("role {} may not perform {action:?}", user.role),
            ));
        }
        Ok(user)
    }

    fn experiment(&self, id: &str) -> Result<Arc<Experiment>, ApiError> {
        Ok(self.store.experiment(id)?)
    }

    /// Runs `op` once per (user, route, key); later calls replay its response.
    async fn idempotent<F>(&self, headers: &HeaderMap, user: &UserAccount, route: String, op: F) -> Response
    where
        F: std::future::Future<Output = ApiResult>,
    {
        let key = headers
            .get(IDEMPOTENCY_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let Some(key) = key else {
            return respond(op.await);
        };
        let slot = {
            let mut map = self.idempotency.lock().unwrap_or_else(|p| p.into_inner());
            map.entry((user.username.clone(), route, key)).or_default().clone()
        };
        let mut guard = slot.lock().await;
        if let Some((status, body)) = guard.as_ref() {
            return (*status, Json(body.clone())).into_response();
        }
        let result = op.await;
        let (status, body) = match &result {
            Ok((s, b)) => (*s, b.clone()),
            Err(e) => (e.status, e.body()),
        };
        if !status.is_server_error() {
            *guard = Some((status, body.clone()));
        }
        (status, Json(body)).into_response()
    }
}

fn respond(result: ApiResult) -> Response {
    match result {
        Ok((status, body)) => (status, Json(body)).into_response(),
        Err(e) => e.into_response(),
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

/// A document given either as a JSON object or as TOML text.
fn parse_doc<T: DeserializeOwned>(doc: Value, what: &str) -> Result<T, ApiError> {
    let bad = |e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", format!("{what}: {e}"));
    match doc {
        Value::String(text) => toml::from_str(&text).map_err(|e| bad(e.to_string())),
        other => serde_json::from_value(other).map_err(|e| bad(e.to_string())),
    }
}

fn blocking_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/experiments", post(create_experiment).get(list_experiments))
        .route("/v1/experiments/{id}", delete(delete_experiment))
        .route("/v1/experiments/{id}/status", get(status))
        .route("/v1/experiments/{id}/suggestions", get(suggestions))
        .route("/v1/experiments/{id}/runs", post(start_run).delete(stop_run))
        .route("/v1/experiments/{id}/claim", post(claim))
        .route("/v1/records/{id}/result", post(submit_result))
        .route("/v1/experiments/{id}/predict", post(predict))
        .route("/v1/experiments/{id}/export", get(export))
        .route("/v1/users", post(create_user))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

/// [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(addr, state))
}

#[derive(Deserialize)]
struct CreateExperiment {
    name: Option<String>,
    problem: Value,
    #[serde(default)]
    config: Option<Value>,
}

async fn create_experiment(State(app): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let user = match app.authorize(&headers, Action::CreateExperiments) {
        Ok(u) => u,
        Err(e) => return e.into_response(),
    };
    let route = "POST /v1/experiments".to_string();
    let op = async {
        let req: CreateExperiment = parse_body(&body)?;
        let problem: Problem = parse_doc(req.problem, "problem")?;
        let config: RunConfig = match req.config {
            Some(doc) => parse_doc(doc, "config")?,
            None => RunConfig::default(),
        };
        config.validate().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", e.to_string()))?;
        let name = match req.name {
            Some(n) => n,
            None => {
                let taken = app.store.list()?;
                (1..).map(|k| format!("experiment-{k}")).find(|n| !taken.contains(n)).expect("unbounded")
            }
        };
        let exp = app.store.create_experiment(&name, problem, config)?;
        Ok((StatusCode::CREATED, json!({"id": exp.name()})))
    };
    app.idempotent(&headers, &user, route, op).await
}

async fn list_experiments(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    let result = (|| {
        app.authorize(&headers, Action::ViewExperiments)?;
        Ok((StatusCode::OK, json!({"experiments": app.store.list()?})))
    })();
    respond(result)
}

async fn delete_experiment(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    let user = match app.authorize(&headers, Action::DeleteExperiments) {
        Ok(u) => u,
        Err(e) => return e.into_response(),
    };
    let route = format!("DELETE /v1/experiments/{id}");
    let op = async {
        if app.runs.lock().unwrap_or_else(|p| p.into_inner()).get(&id).is_some_and(|r| r.is_active()) {
            return Err(ApiError::new(StatusCode::CONFLICT, "run_active", "stop the scheduler first"));
        }
        app.store.delete(&id)?;
        Ok((StatusCode::OK, json!({"deleted": id})))
    };
    app.idempotent(&headers, &user, route, op).await
}

async fn status(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    let result = (|| {
        app.authorize(&headers, Action::ViewExperiments)?;
        let exp = app.experiment(&id)?;
        let records = exp.all_records();
        let statistics = oed::store::statistics(exp.problem(), &records);
        let scheduler = app
            .runs
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(&id)
            .map(|r| r.status())
            .unwrap_or_default();
        Ok((
            StatusCode::OK,
            json!({
                "id": exp.name(),
                "problem": exp.problem(),
                "config": exp.config(),
                "records": records,
                "statistics": statistics,
                "scheduler": scheduler,
            }),
        ))
    })();
    respond(result)
}

async fn suggestions(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    let result = async {
        app.authorize(&headers, Action::ViewExperiments)?;
        let exp = app.experiment(&id)?;
        tokio::task::spawn_blocking(move || {
            let pending = exp.records(&RecordFilter::status(Status::Pending));
            let state = exp.optimizer_state();
            let models = if state.evaluated.len() >= 2 {
                fit_models(exp.problem(), &state.evaluated, &exp.config().surrogate.clone().unwrap_or_default(), 0).ok()
            } else {
                None
            };
            let rows: Vec<Value> = pending
                .into_iter()
                .map(|r| {
                    let predicted = models
                        .as_ref()
                        .and_then(|m| predict_design(m, exp.problem(), &r.design).ok());
                    json!({"record": r, "predicted": predicted})
                })
                .collect();
            Ok((StatusCode::OK, json!({"suggestions": rows})))
        })
        .await
        .map_err(blocking_error)?
    }
    .await;
    respond(result)
}

async fn start_run(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    let user = match app.authorize(&headers, Action::ControlScheduler) {
        Ok(u) => u,
        Err(e) => return e.into_response(),
    };
    let route = format!("POST /v1/experiments/{id}/runs");
    let op = async {
        let req: RunRequest = parse_body(&body)?;
        let exp = app.experiment(&id)?;
        let mut runs = app.runs.lock().unwrap_or_else(|p| p.into_inner());
        if runs.get(&id).is_some_and(|r| r.is_active()) {
            return Err(ApiError::new(StatusCode::CONFLICT, "run_active", "a run is already active"));
        }
        let handle = runs::RunHandle::start(exp, req)?;
        let status = handle.status();
        runs.insert(id.clone(), handle);
        Ok((StatusCode::ACCEPTED, json!({"scheduler": status})))
    };
    app.idempotent(&headers, &user, route, op).await
}

#[derive(Deserialize, Default)]
struct StopQuery {
    #[serde(default)]
    hard: bool,
}

async fn stop_run(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<StopQuery>,
) -> Response {
    let user = match app.authorize(&headers, Action::ControlScheduler) {
        Ok(u) => u,
        Err(e) => return e.into_response(),
    };
    let route = format!("DELETE /v1/experiments/{id}/runs");
    let op = async {
        app.experiment(&id)?;
        let runs = app.runs.lock().unwrap_or_else(|p| p.into_inner());
        let handle = runs
            .get(&id)
            .filter(|r| r.is_active())
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "not_running", "no active run"))?;
        handle.stop(q.hard);
        Ok((StatusCode::ACCEPTED, json!({"scheduler": handle.status()})))
    };
    app.idempotent(&headers, &user, route, op).await
}

#[derive(Deserialize, Default)]
struct ClaimRequest {
    worker: Option<String>,
}

async fn claim(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    let user = match app.authorize(&headers, Action::ClaimRecords) {
        Ok(u) => u,
        Err(e) => return e.into_response(),
    };
    let route = format!("POST /v1/experiments/{id}/claim");
    let op = async {
        let req: ClaimRequest = parse_body(&body)?;
        let exp = app.experiment(&id)?;
        let worker = req.worker.unwrap_or_else(|| user.username.clone());
        match exp.claim_next(&worker, &user.username)? {
            Some(record) => Ok((StatusCode::OK, json!({"status": "claimed", "record": record}))),
            None => Err(
                ApiError::new(StatusCode::CONFLICT, "none_pending", "no pending records").with(json!({"status": "none_pending"})),
            ),
        }
    };
    app.idempotent(&headers, &user, route, op).await
}

#[derive(Deserialize)]
struct ResultRequest {
    experiment: String,
    objectives: Option<Vec<f64>>,
    failure: Option<String>,
    worker: Option<String>,
    #[serde(default)]
    note: String,
}

async fn submit_result(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<u64>, body: Bytes) -> Response {
    let user = match app.authorize(&headers, Action::SubmitResults) {
        Ok(u) => u,
        Err(e) => return e.into_response(),
    };
    let route = format!("POST /v1/records/{id}/result");
    let op = async {
        let req: ResultRequest = parse_body(&body)?;
        let exp = app.experiment(&req.experiment)?;
        let record = exp.record(id).ok_or(StoreError::UnknownRecord(id))?;
        if record.status == Status::InEvaluation {
            let worker = req.worker.as_deref().unwrap_or(&user.username);
            if record.worker.as_deref().is_some_and(|w| w != worker) {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "wrong_worker",
                    format!("record {id} is claimed by another worker"),
                ));
            }
        }
        let updated = match (req.objectives, req.failure) {
            (Some(y), None) => exp.complete(id, y, &req.note, &user.username)?,
            (None, Some(reason)) => exp.fail(id, &reason, &user.username)?,
            _ => {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_payload",
                    "give exactly one of `objectives` or `failure`",
                ))
            }
        };
        Ok((StatusCode::OK, json!({"record": updated})))
    };
    app.idempotent(&headers, &user, route, op).await
}

#[derive(Deserialize)]
struct PredictRequest {
    design: Design,
}

async fn predict(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    let result = async {
        app.authorize(&headers, Action::QueryPredictions)?;
        let exp = app.experiment(&id)?;
        let req: PredictRequest = parse_body(&body)?;
        exp.problem().check_design(&req.design).map_err(|e| problem_error(&e))?;
        tokio::task::spawn_blocking(move || {
            let state = exp.optimizer_state();
            if state.evaluated.len() < 2 {
                return Err(OptimizerError::NoModel.into());
            }
            let gp = exp.config().surrogate.clone().unwrap_or_default();
            let models = fit_models(exp.problem(), &state.evaluated, &gp, 0)?;
            let posts = predict_design(&models, exp.problem(), &req.design)?;
            let objectives: Vec<Value> = exp
                .problem()
                .objectives
                .iter()
                .zip(&posts)
                .map(|(o, p)| json!({"name": o.name, "mean": p.mean, "variance": p.variance, "std": p.std()}))
                .collect();
            Ok((StatusCode::OK, json!({"objectives": objectives})))
        })
        .await
        .map_err(blocking_error)?
    }
    .await;
    respond(result)
}

async fn export(State(app): State<Arc<AppState>>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    let result = (|| {
        app.authorize(&headers, Action::ExportData)?;
        let exp = app.experiment(&id)?;
        let files = exp.export_files()?;
        Ok((StatusCode::OK, json!({"name": exp.name(), "files": files})))
    })();
    respond(result)
}

#[derive(Deserialize)]
struct CreateUser {
    username: String,
    role: Role,
}

async fn create_user(State(app): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let user = match app.authorize(&headers, Action::ManageUsers) {
        Ok(u) => u,
        Err(e) => return e.into_response(),
    };
    let op = async {
        let req: CreateUser = parse_body(&body)?;
        let mut users = app.users.write().unwrap_or_else(|p| p.into_inner());
        let account = users.add(&req.username, req.role).map_err(|e| match e {
            auth::UserError::Duplicate(_) => ApiError::new(StatusCode::CONFLICT, "name_conflict", e.to_string()),
            auth::UserError::InvalidName(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        })?;
        Ok((StatusCode::CREATED, json!(account)))
    };
    app.idempotent(&headers, &user, "POST /v1/users".into(), op).await
}
