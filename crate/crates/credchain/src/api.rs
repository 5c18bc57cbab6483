//! JSON-over-HTTP API. Sessions are bearer tokens from `POST /login`.
//! Every error body is `{"error": <code>, "message": <text>}`.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{
    DefaultBodyLimit, FromRequest, FromRequestParts, Multipart, Path, Query, Request, State,
};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use credchain_core::ledger::{Address, TxStatus};
use credchain_core::registry::{
    Category, Operation, Registry, SearchQuery, ServiceError, VerifyInput,
};
use credchain_core::Digest128;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::store::{Store, StoreError};

/// Largest accepted request body, documents included.
pub const MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

/// Route table: method, path, and the operation it performs (if gated).
pub const API_OPERATIONS: &[(&str, &str, Option<Operation>)] = &[
    ("POST", "/login", None),
    ("POST", "/logout", Some(Operation::Logout)),
    ("POST", "/reset/request", None),
    ("POST", "/reset/apply", None),
    ("POST", "/employers", None),
    ("POST", "/admin/deploy", Some(Operation::DeployContract)),
    (
        "POST",
        "/admin/universities",
        Some(Operation::RegisterUniversity),
    ),
    ("GET", "/admin/outbox", Some(Operation::ReadOutbox)),
    ("POST", "/admin/faucet", Some(Operation::Faucet)),
    ("GET", "/universities", None),
    (
        "POST",
        "/universities/{id}/students",
        Some(Operation::AddStudent),
    ),
    (
        "POST",
        "/universities/{id}/certificates",
        Some(Operation::AuthenticateCertificate),
    ),
    (
        "POST",
        "/universities/{id}/certificates/{digest}/revoke",
        Some(Operation::RevokeCertificate),
    ),
    ("GET", "/students/{id}/record", Some(Operation::ViewRecord)),
    ("GET", "/students/search", Some(Operation::SearchStudents)),
    ("POST", "/verify", Some(Operation::Verify)),
    ("GET", "/chain", None),
    ("GET", "/chain/status/{tx_id}", None),
];

pub type Shared = Arc<Mutex<Store>>;

#[derive(Clone)]
pub struct AppState {
    pub store: Shared,
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/login", post(login))
        .route("/logout", post(logout))
        .route("/reset/request", post(reset_request))
        .route("/reset/apply", post(reset_apply))
        .route("/employers", post(register_employer))
        .route("/admin/deploy", post(deploy))
        .route("/admin/universities", post(register_university))
        .route("/admin/outbox", get(outbox))
        .route("/admin/faucet", post(faucet))
        .route("/universities", get(universities))
        .route("/universities/{id}/students", post(add_student))
        .route("/universities/{id}/certificates", post(authenticate))
        .route(
            "/universities/{id}/certificates/{digest}/revoke",
            post(revoke),
        )
        .route("/students/search", get(search))
        .route("/students/{id}/record", get(record))
        .route("/verify", post(verify))
        .route("/chain", get(chain))
        .route("/chain/status/{tx_id}", get(tx_status))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(AppState { store })
}

// ---- errors -------------------------------------------------------------------

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

/// HTTP status for a service error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "unauthenticated" | "invalid_credentials" => StatusCode::UNAUTHORIZED,
        "forbidden" => StatusCode::FORBIDDEN,
        "not_found" => StatusCode::NOT_FOUND,
        "wallet_underfunded" => StatusCode::PAYMENT_REQUIRED,
        "conflict"
        | "duplicate_digest"
        | "not_deployed"
        | "university_not_confirmed"
        | "ledger_rejected" => StatusCode::CONFLICT,
        "bad_request" | "invalid_token" => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let code = e.code();
        ApiError::new(status_for(code), code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        log::error!("persistence failure: {e}");
        ApiError::internal("persistence failure")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.code, "message": self.message }));
        (self.status, body).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok(value: impl serde::Serialize) -> ApiResult {
    Ok(Json(value).into_response())
}

fn with_status(status: StatusCode, value: impl serde::Serialize) -> ApiResult {
    Ok((status, Json(value)).into_response())
}

/// Status for a freshly submitted transaction.
fn submitted(status: &TxStatus) -> StatusCode {
    if status.is_confirmed() {
        StatusCode::OK
    } else {
        StatusCode::ACCEPTED
    }
}

// ---- extractors ---------------------------------------------------------------

/// Bearer token from the `Authorization` header, if present.
pub struct Bearer(pub Option<String>);

impl<S: Send + Sync> FromRequestParts<S> for Bearer {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(|t| t.trim().to_string());
        Ok(Bearer(token))
    }
}

impl Bearer {
    fn token(&self) -> &str {
        self.0.as_deref().unwrap_or("")
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn lock(state: &AppState) -> Result<MutexGuard<'_, Store>, ApiError> {
    state
        .store
        .lock()
        .map_err(|_| ApiError::internal("state lock poisoned"))
}

/// Runs `f` against the registry and persists whatever it recorded.
fn run<T>(
    state: &AppState,
    f: impl FnOnce(&mut Registry) -> Result<T, ServiceError>,
) -> Result<T, ApiError> {
    let mut store = lock(state)?;
    let out = f(store.registry_mut());
    store.persist()?;
    Ok(out?)
}

/// Refuses the request unless the bearer may perform `op`.
fn permit(state: &AppState, bearer: &Bearer, op: Operation) -> Result<(), ApiError> {
    run(state, |r| r.permit(bearer.0.as_deref(), op).map(|_| ()))
}

// ---- handlers -----------------------------------------------------------------

#[derive(Deserialize)]
struct LoginBody {
    user_id: String,
    secret: String,
}

async fn login(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let body: LoginBody = parse(&body)?;
    let (token, role) = run(&state, |r| {
        let token = r.login(&body.user_id, &body.secret)?;
        let role = r.session_role(&token)?;
        Ok((token, role))
    })?;
    ok(json!({ "token": token, "role": role, "user_id": body.user_id }))
}

async fn logout(State(state): State<AppState>, bearer: Bearer) -> ApiResult {
    run(&state, |r| r.logout(bearer.token()))?;
    ok(json!({ "ok": true }))
}

#[derive(Deserialize)]
struct ResetRequestBody {
    user_id: String,
}

async fn reset_request(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let body: ResetRequestBody = parse(&body)?;
    run(&state, |r| r.request_reset(&body.user_id))?;
    with_status(StatusCode::ACCEPTED, json!({ "ok": true }))
}

#[derive(Deserialize)]
struct ResetApplyBody {
    token: String,
    new_secret: String,
}

async fn reset_apply(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let body: ResetApplyBody = parse(&body)?;
    run(&state, |r| r.apply_reset(&body.token, &body.new_secret))?;
    ok(json!({ "ok": true }))
}

#[derive(Deserialize)]
struct EmployerBody {
    user_id: String,
    display_name: String,
    email: String,
    secret: String,
}

async fn register_employer(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let b: EmployerBody = parse(&body)?;
    let view = run(&state, |r| {
        r.register_employer(&b.user_id, &b.display_name, &b.email, &b.secret)
    })?;
    with_status(StatusCode::CREATED, view)
}

async fn deploy(State(state): State<AppState>, bearer: Bearer) -> ApiResult {
    let receipt = run(&state, |r| r.deploy_contract(bearer.token()))?;
    with_status(submitted(&receipt.status), receipt)
}

#[derive(Deserialize)]
struct UniversityBody {
    name: String,
    email: String,
    secret: String,
}

async fn register_university(
    State(state): State<AppState>,
    bearer: Bearer,
    body: Bytes,
) -> ApiResult {
    permit(&state, &bearer, Operation::RegisterUniversity)?;
    let b: UniversityBody = parse(&body)?;
    let (account, receipt) = run(&state, |r| {
        r.admin_register_university(bearer.token(), &b.name, &b.email, &b.secret)
    })?;
    with_status(
        StatusCode::CREATED,
        json!({ "account": account, "receipt": receipt }),
    )
}

async fn outbox(State(state): State<AppState>, bearer: Bearer) -> ApiResult {
    ok(run(&state, |r| r.read_outbox(bearer.token()))?)
}

#[derive(Deserialize)]
struct FaucetBody {
    address: String,
    amount: u64,
}

async fn faucet(State(state): State<AppState>, bearer: Bearer, body: Bytes) -> ApiResult {
    permit(&state, &bearer, Operation::Faucet)?;
    let b: FaucetBody = parse(&body)?;
    let address: Address = b
        .address
        .parse()
        .map_err(|e| ApiError::bad_request(format!("invalid address: {e}")))?;
    let balance = run(&state, |r| r.faucet(bearer.token(), address, b.amount))?;
    ok(json!({ "address": address, "balance": balance }))
}

async fn universities(State(state): State<AppState>) -> ApiResult {
    let store = lock(&state)?;
    ok(store.registry().universities())
}

#[derive(Deserialize)]
struct StudentBody {
    student_id: String,
    display_name: String,
    email: String,
    secret: String,
}

async fn add_student(
    State(state): State<AppState>,
    bearer: Bearer,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    permit(&state, &bearer, Operation::AddStudent)?;
    let b: StudentBody = parse(&body)?;
    let view = run(&state, |r| {
        r.university_add_student(
            bearer.token(),
            &id,
            &b.student_id,
            &b.display_name,
            &b.email,
            &b.secret,
        )
    })?;
    with_status(StatusCode::CREATED, view)
}

#[derive(Deserialize)]
struct CertificateMetadata {
    student_id: String,
    title: String,
    category: String,
}

/// Collects named multipart fields as raw bytes.
async fn read_fields(
    mut multipart: Multipart,
    wanted: &[&str],
) -> Result<Vec<Option<Vec<u8>>>, ApiError> {
    let mut out = vec![None; wanted.len()];
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("invalid multipart body: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("invalid multipart body: {e}")))?;
        if let Some(i) = wanted.iter().position(|w| *w == name) {
            out[i] = Some(bytes.to_vec());
        }
    }
    Ok(out)
}

async fn authenticate(
    State(state): State<AppState>,
    bearer: Bearer,
    Path(id): Path<String>,
    request: Request,
) -> ApiResult {
    permit(&state, &bearer, Operation::AuthenticateCertificate)?;
    let multipart = Multipart::from_request(request, &())
        .await
        .map_err(|e| ApiError::bad_request(format!("expected multipart/form-data: {e}")))?;
    let mut fields = read_fields(multipart, &["metadata", "document"]).await?;
    let document = fields[1]
        .take()
        .ok_or_else(|| ApiError::bad_request("missing document field"))?;
    let metadata = fields[0]
        .take()
        .ok_or_else(|| ApiError::bad_request("missing metadata field"))?;
    let meta: CertificateMetadata = parse(&Bytes::from(metadata))?;
    let category: Category = meta
        .category
        .parse()
        .map_err(|e| ApiError::bad_request(format!("{e}")))?;

    let mut store = lock(&state)?;
    let result = store.registry_mut().authenticate_certificate(
        bearer.token(),
        &id,
        &meta.student_id,
        &meta.title,
        category,
        &document,
    );
    if let Ok(receipt) = &result {
        store.save_document(&receipt.cert_digest, &document)?;
    }
    store.persist()?;
    let receipt = result?;
    with_status(submitted(&receipt.status), receipt)
}

async fn revoke(
    State(state): State<AppState>,
    bearer: Bearer,
    Path((id, digest)): Path<(String, String)>,
) -> ApiResult {
    let receipt = run(&state, |r| {
        r.revoke_certificate(bearer.token(), &id, &digest)
    })?;
    with_status(submitted(&receipt.status), receipt)
}

async fn record(
    State(state): State<AppState>,
    bearer: Bearer,
    Path(id): Path<String>,
) -> ApiResult {
    ok(run(&state, |r| {
        r.get_achievement_record(bearer.token(), &id)
    })?)
}

#[derive(Deserialize)]
struct SearchParams {
    category: Option<String>,
    university: Option<String>,
    keyword: Option<String>,
}

async fn search(
    State(state): State<AppState>,
    bearer: Bearer,
    params: Result<Query<SearchParams>, QueryRejection>,
) -> ApiResult {
    permit(&state, &bearer, Operation::SearchStudents)?;
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let category = params
        .category
        .filter(|c| !c.trim().is_empty())
        .map(|c| c.parse::<Category>())
        .transpose()
        .map_err(|e| ApiError::bad_request(format!("{e}")))?;
    let query = SearchQuery {
        category,
        university: params.university.filter(|u| !u.trim().is_empty()),
        keyword: params.keyword.filter(|k| !k.trim().is_empty()),
    };
    ok(run(&state, |r| r.search_students(bearer.token(), &query))?)
}

#[derive(Deserialize)]
struct VerifyBody {
    digest: String,
}

/// Accepts `{"digest": hex}` or a multipart `document` field.
async fn verify(State(state): State<AppState>, request: Request) -> ApiResult {
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let outcome = if is_multipart {
        let multipart = Multipart::from_request(request, &())
            .await
            .map_err(|e| ApiError::bad_request(format!("invalid multipart body: {e}")))?;
        let mut fields = read_fields(multipart, &["document"]).await?;
        let document = fields[0]
            .take()
            .ok_or_else(|| ApiError::bad_request("missing document field"))?;
        let store = lock(&state)?;
        store
            .registry()
            .employer_verify(VerifyInput::Document(&document))?
    } else {
        let body = Bytes::from_request(request, &())
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let body: VerifyBody = parse(&body)?;
        let store = lock(&state)?;
        store
            .registry()
            .employer_verify(VerifyInput::Digest(&body.digest))?
    };
    ok(outcome)
}

async fn chain(State(state): State<AppState>) -> ApiResult {
    let store = lock(&state)?;
    let registry = store.registry();
    let chain = registry.chain();
    ok(json!({
        "difficulty": chain.params().difficulty,
        "capacity": chain.params().capacity,
        "length": chain.len(),
        "tip": chain.tip().hash,
        "pending": registry.ledger().pool().len(),
        "blocks": chain.blocks(),
    }))
}

async fn tx_status(State(state): State<AppState>, Path(tx_id): Path<String>) -> ApiResult {
    let tx_id: Digest128 = tx_id
        .trim()
        .parse()
        .map_err(|_| ApiError::bad_request("tx_id must be 32 hex characters"))?;
    let store = lock(&state)?;
    let status = store.registry().tx_status(&tx_id);
    let mut value = serde_json::to_value(status).map_err(|e| ApiError::internal(e.to_string()))?;
    if let Value::Object(map) = &mut value {
        map.insert("tx_id".into(), json!(tx_id));
    }
    ok(value)
}
