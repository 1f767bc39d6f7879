//! HTTP surface over one [`Engine`].
//!
//! Mutating endpoints take an [`ApiRequestEnvelope`] whose `actor` and
//! `auth_token` must match a configured scope. Reads and `/check` need no
//! credentials. Every error body is the serialized manager error, tagged
//! by an `"error"` field.
//!
//! All mutations go through one mutex around the engine. After each
//! successful mutation the new state is published as an `Arc`, so reads
//! never wait on a writer.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::Config;
use crate::cost::CostSchedule;
use crate::dispatcher::{Dispatcher, Handler, HandlerMode, InvokeError, RegisterError};
use crate::import::{import_users, BulkImportFile, ImportError, ImportRecord};
use crate::ledger::{FileStore, LedgerError, ReplayError};
use crate::managers::{AdminScope, Engine, EngineError, EngineState};
use crate::model::{FunctionDef, FunctionId, Metadata, Request, Role, RoleId, User, UserId};
use crate::policy::PolicyMode;

#[derive(Debug, Clone, Deserialize)]
pub struct ApiRequestEnvelope<T> {
    pub actor: String,
    pub auth_token: String,
    pub body: T,
}

/// Envelope for endpoints whose body carries nothing.
#[derive(Debug, Clone, Deserialize)]
struct BareEnvelope {
    actor: String,
    auth_token: String,
}

pub struct Service {
    engine: Mutex<Engine>,
    published: RwLock<Arc<EngineState>>,
    dispatcher: Dispatcher,
    schedule: CostSchedule,
    config: Config,
}

impl Service {
    pub fn new(engine: Engine, config: Config) -> Self {
        let published = RwLock::new(engine.snapshot());
        Self {
            dispatcher: Dispatcher::new(*engine.schedule()),
            schedule: *engine.schedule(),
            engine: Mutex::new(engine),
            published,
            config,
        }
    }

    /// The schedule checks and invocations are metered with.
    pub fn schedule(&self) -> &CostSchedule {
        &self.schedule
    }

    /// The most recently published state.
    pub fn snapshot(&self) -> Arc<EngineState> {
        self.published.read().clone()
    }

    pub fn dispatcher(&self) -> &Dispatcher {
        &self.dispatcher
    }

    pub fn register_handler(
        &self,
        function_id: &FunctionId,
        handler: Arc<dyn Handler>,
        metered_cost: u64,
        mode: HandlerMode,
    ) -> Result<(), RegisterError> {
        self.dispatcher
            .register_target(&self.snapshot(), function_id, handler, metered_cost, mode)
    }

    /// Runs `f` as the single writer and publishes the resulting state.
    pub fn mutate<T, E>(&self, f: impl FnOnce(&mut Engine) -> Result<T, E>) -> Result<T, E> {
        let mut engine = self.engine.lock();
        let out = f(&mut engine);
        *self.published.write() = engine.snapshot();
        out
    }

    pub fn ledger_sequence(&self) -> u64 {
        self.engine.lock().head().sequence
    }

    fn scope(&self, actor: &str, token: &str) -> Result<AdminScope, ApiError> {
        self.config.authenticate(actor, token).ok_or(ApiError::Unauthenticated)
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unknown actor or token")]
    Unauthenticated,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Import(#[from] ImportError),
    #[error(transparent)]
    Invoke(#[from] InvokeError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

fn engine_status(e: &EngineError) -> StatusCode {
    use EngineError::*;
    match e {
        ScopeViolation { .. } => StatusCode::FORBIDDEN,
        RoleNotFound { .. } | FunctionNotFound { .. } | UserNotFound { .. } | AssignmentNotFound { .. } | BindingNotFound { .. } => {
            StatusCode::NOT_FOUND
        }
        DuplicateRole { .. }
        | RoleInUse { .. }
        | DuplicateFunction { .. }
        | FunctionInUse { .. }
        | DuplicateUser { .. }
        | DuplicateExternalRef { .. }
        | UserHasRoles { .. }
        | DuplicateAssignment { .. }
        | DuplicateBinding { .. }
        | ThresholdViolation { .. } => StatusCode::CONFLICT,
        StorageFailure { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match &self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({"error": "bad_request", "message": m})),
            ApiError::Unauthenticated => (StatusCode::UNAUTHORIZED, json!({"error": "unauthenticated"})),
            ApiError::Engine(e) => (engine_status(e), serde_json::to_value(e).expect("error serializes")),
            ApiError::Import(ImportError::Engine(e)) => (engine_status(e), serde_json::to_value(e).expect("error serializes")),
            ApiError::Import(e) => {
                let status = match e {
                    ImportError::DuplicateUserInImport { .. } => StatusCode::CONFLICT,
                    ImportError::UnknownRoleInImport { .. } => StatusCode::NOT_FOUND,
                    _ => StatusCode::BAD_REQUEST,
                };
                (status, serde_json::to_value(e).expect("error serializes"))
            }
            ApiError::Invoke(InvokeError::Authorization(e)) => (StatusCode::FORBIDDEN, serde_json::to_value(e).expect("error serializes")),
            ApiError::Invoke(InvokeError::NoHandler { request_id, function_id }) => (
                StatusCode::NOT_IMPLEMENTED,
                json!({"error": "no_handler", "request_id": request_id, "function_id": function_id}),
            ),
            ApiError::Invoke(InvokeError::HandlerFailure {
                request_id,
                function_id,
                message,
            }) => (
                StatusCode::BAD_GATEWAY,
                json!({"error": "handler_failure", "request_id": request_id, "function_id": function_id, "message": message}),
            ),
            ApiError::Ledger(e) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": "storage_failure", "message": e.to_string()}),
            ),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;
type Shared = State<Arc<Service>>;

fn parse<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(e.to_string()))
}

fn id<T: std::str::FromStr>(raw: &str) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ApiError::BadRequest(e.to_string()))
}

fn ok(value: impl Serialize) -> ApiResult {
    Ok(Json(value).into_response())
}

fn created(value: impl Serialize) -> ApiResult {
    Ok((StatusCode::CREATED, Json(value)).into_response())
}

/// Authenticates an envelope and decodes its body.
fn open<T: DeserializeOwned>(svc: &Service, bytes: &Bytes) -> Result<(AdminScope, T), ApiError> {
    let env: ApiRequestEnvelope<T> = parse(bytes)?;
    Ok((svc.scope(&env.actor, &env.auth_token)?, env.body))
}

fn open_bare(svc: &Service, bytes: &Bytes) -> Result<AdminScope, ApiError> {
    let env: BareEnvelope = parse(bytes)?;
    svc.scope(&env.actor, &env.auth_token)
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/roles", get(list_roles).post(add_role))
        .route("/roles/{id}", get(get_role).put(update_role).delete(remove_role))
        .route("/users", get(list_users).post(add_user))
        .route("/users/{id}", get(get_user).delete(remove_user))
        .route("/users/{id}/active", put(set_active))
        .route("/users/{id}/roles", get(user_roles).post(grant))
        .route("/users/{id}/roles/{rid}", delete(revoke))
        .route("/functions", get(list_functions).post(add_function))
        .route("/functions/{id}", get(get_function).delete(remove_function))
        .route("/policies/{fid}", get(get_policy))
        .route("/policies/{fid}/roles", post(bind))
        .route("/policies/{fid}/roles/{rid}", delete(unbind))
        .route("/policies/{fid}/mode", put(set_mode))
        .route("/check", get(check))
        .route("/whatif", get(whatif))
        .route("/invoke", post(invoke))
        .route("/import", post(import))
        .route("/audit/verify", get(audit_verify))
        .with_state(service)
}

async fn health(State(svc): Shared) -> ApiResult {
    let state = svc.snapshot();
    ok(json!({"status": "ok", "version": state.version}))
}

async fn list_roles(State(svc): Shared) -> ApiResult {
    ok(svc.snapshot().role_list())
}

async fn get_role(State(svc): Shared, Path(raw): Path<String>) -> ApiResult {
    ok(svc.snapshot().role_get(&id(&raw)?)?)
}

async fn add_role(State(svc): Shared, bytes: Bytes) -> ApiResult {
    let (scope, role): (_, Role) = open(&svc, &bytes)?;
    created(svc.mutate(|e| e.role_add(&scope, role))?)
}

#[derive(Deserialize)]
struct RoleUpdate {
    #[serde(default)]
    description: String,
    #[serde(default)]
    metadata: Metadata,
}

async fn update_role(State(svc): Shared, Path(raw): Path<String>, bytes: Bytes) -> ApiResult {
    let role: RoleId = id(&raw)?;
    let (scope, body): (_, RoleUpdate) = open(&svc, &bytes)?;
    svc.mutate(|e| e.role_update(&scope, &role, body.description, body.metadata))?;
    ok(svc.snapshot().role_get(&role)?)
}

async fn remove_role(State(svc): Shared, Path(raw): Path<String>, bytes: Bytes) -> ApiResult {
    let role: RoleId = id(&raw)?;
    let scope = open_bare(&svc, &bytes)?;
    svc.mutate(|e| e.role_remove(&scope, &role))?;
    ok(json!({"removed": role}))
}

async fn list_users(State(svc): Shared) -> ApiResult {
    ok(svc.snapshot().user_list())
}

async fn get_user(State(svc): Shared, Path(raw): Path<String>) -> ApiResult {
    ok(svc.snapshot().user_get(&id(&raw)?)?)
}

async fn add_user(State(svc): Shared, bytes: Bytes) -> ApiResult {
    let (scope, user): (_, User) = open(&svc, &bytes)?;
    created(svc.mutate(|e| e.user_add(&scope, user))?)
}

async fn remove_user(State(svc): Shared, Path(raw): Path<String>, bytes: Bytes) -> ApiResult {
    let user: UserId = id(&raw)?;
    let scope = open_bare(&svc, &bytes)?;
    svc.mutate(|e| e.user_remove(&scope, &user))?;
    ok(json!({"removed": user}))
}

#[derive(Deserialize)]
struct ActiveBody {
    active: bool,
}

async fn set_active(State(svc): Shared, Path(raw): Path<String>, bytes: Bytes) -> ApiResult {
    let user: UserId = id(&raw)?;
    let (scope, body): (_, ActiveBody) = open(&svc, &bytes)?;
    svc.mutate(|e| e.user_set_active(&scope, &user, body.active))?;
    ok(svc.snapshot().user_get(&user)?)
}

async fn user_roles(State(svc): Shared, Path(raw): Path<String>) -> ApiResult {
    ok(svc.snapshot().get_user_roles(&id(&raw)?)?)
}

#[derive(Deserialize)]
struct RoleRef {
    role_id: RoleId,
}

async fn grant(State(svc): Shared, Path(raw): Path<String>, bytes: Bytes) -> ApiResult {
    let user: UserId = id(&raw)?;
    let (scope, body): (_, RoleRef) = open(&svc, &bytes)?;
    svc.mutate(|e| e.assign_role(&scope, &user, &body.role_id))?;
    ok(svc.snapshot().get_user_roles(&user)?)
}

async fn revoke(State(svc): Shared, Path((raw_user, raw_role)): Path<(String, String)>, bytes: Bytes) -> ApiResult {
    let user: UserId = id(&raw_user)?;
    let role: RoleId = id(&raw_role)?;
    let scope = open_bare(&svc, &bytes)?;
    svc.mutate(|e| e.revoke_role(&scope, &user, &role))?;
    ok(svc.snapshot().get_user_roles(&user)?)
}

async fn list_functions(State(svc): Shared) -> ApiResult {
    ok(svc.snapshot().function_list())
}

async fn get_function(State(svc): Shared, Path(raw): Path<String>) -> ApiResult {
    ok(svc.snapshot().function_get(&id(&raw)?)?)
}

async fn add_function(State(svc): Shared, bytes: Bytes) -> ApiResult {
    let (scope, function): (_, FunctionDef) = open(&svc, &bytes)?;
    created(svc.mutate(|e| e.function_register(&scope, function))?)
}

async fn remove_function(State(svc): Shared, Path(raw): Path<String>, bytes: Bytes) -> ApiResult {
    let function: FunctionId = id(&raw)?;
    let scope = open_bare(&svc, &bytes)?;
    svc.mutate(|e| e.function_remove(&scope, &function))?;
    ok(json!({"removed": function}))
}

fn policy_view(state: &EngineState, function: &FunctionId) -> Result<Value, ApiError> {
    let (roles, mode) = state.get_function_roles(function)?;
    Ok(json!({"function_id": function, "required_roles": roles, "mode": mode}))
}

async fn get_policy(State(svc): Shared, Path(raw): Path<String>) -> ApiResult {
    ok(policy_view(&svc.snapshot(), &id(&raw)?)?)
}

async fn bind(State(svc): Shared, Path(raw): Path<String>, bytes: Bytes) -> ApiResult {
    let function: FunctionId = id(&raw)?;
    let (scope, body): (_, RoleRef) = open(&svc, &bytes)?;
    svc.mutate(|e| e.policy_bind(&scope, &function, &body.role_id))?;
    ok(policy_view(&svc.snapshot(), &function)?)
}

async fn unbind(State(svc): Shared, Path((raw_fn, raw_role)): Path<(String, String)>, bytes: Bytes) -> ApiResult {
    let function: FunctionId = id(&raw_fn)?;
    let role: RoleId = id(&raw_role)?;
    let scope = open_bare(&svc, &bytes)?;
    svc.mutate(|e| e.policy_unbind(&scope, &function, &role))?;
    ok(policy_view(&svc.snapshot(), &function)?)
}

async fn set_mode(State(svc): Shared, Path(raw): Path<String>, bytes: Bytes) -> ApiResult {
    let function: FunctionId = id(&raw)?;
    let (scope, mode): (_, PolicyMode) = open(&svc, &bytes)?;
    svc.mutate(|e| e.policy_set_mode(&scope, &function, mode))?;
    ok(policy_view(&svc.snapshot(), &function)?)
}

#[derive(Deserialize)]
struct CheckQuery {
    user: String,
    function: String,
    /// Comma-separated hypothetical roles, `/whatif` only.
    #[serde(default)]
    with_role: Option<String>,
}

async fn check(State(svc): Shared, Query(q): Query<CheckQuery>) -> ApiResult {
    let state = svc.snapshot();
    ok(state.check_authorization(&id(&q.user)?, &id(&q.function)?, &svc.schedule))
}

async fn whatif(State(svc): Shared, Query(q): Query<CheckQuery>) -> ApiResult {
    let extra = q
        .with_role
        .as_deref()
        .unwrap_or("")
        .split(',')
        .filter(|s| !s.is_empty())
        .map(id::<RoleId>)
        .collect::<Result<BTreeSet<_>, _>>()?;
    let state = svc.snapshot();
    ok(state.what_if(&id(&q.user)?, &id(&q.function)?, &extra, &svc.schedule)?)
}

async fn invoke(State(svc): Shared, bytes: Bytes) -> ApiResult {
    let req: Request = parse(&bytes)?;
    let state = svc.snapshot();
    let result = svc.dispatcher.invoke(&state, &req)?;
    ok(json!({"request_id": req.request_id, "result": hex::encode(result)}))
}

#[derive(Deserialize)]
struct ImportBody {
    format_version: u32,
    users: Vec<ImportRecord>,
}

async fn import(State(svc): Shared, bytes: Bytes) -> ApiResult {
    let (scope, body): (_, ImportBody) = open(&svc, &bytes)?;
    let file = BulkImportFile::from_records(body.format_version, body.users)?;
    ok(svc.mutate(|e| import_users(e, &scope, &file))?)
}

async fn audit_verify(State(svc): Shared) -> ApiResult {
    let verdict = svc.engine.lock().store().verify()?;
    match verdict {
        Ok(head) => ok(json!({"ok": true, "sequence": head.sequence, "head_hash": head.hash})),
        Err(broken) => ok(json!({"ok": false, "broken": broken})),
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("opening log: {0}")]
    Ledger(#[from] LedgerError),
    #[error("replaying log: {0}")]
    Replay(#[from] ReplayError),
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("serving: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the configured log, replays it and serves until ctrl-c.
pub async fn serve(config: Config) -> Result<(), ServeError> {
    let store = FileStore::open(&config.log_path)?;
    let engine = Engine::with_store(Box::new(store))?.with_schedule(config.costs);
    let addr = config.listen;
    let service = Arc::new(Service::new(engine, config));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    eprintln!("drbac listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
