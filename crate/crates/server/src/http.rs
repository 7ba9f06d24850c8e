//! axum routes over [`Service`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use fedeval_core::api::*;
use fedeval_core::{Account, AssociationId, BenchmarkId, ContentUid, CubeId};

use crate::error::ApiError;
use crate::service::Service;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type Shared = Arc<Service>;
type ApiResult<T> = Result<(StatusCode, Json<T>), ApiError>;

fn ok<T>(v: T) -> ApiResult<T> {
    Ok((StatusCode::OK, Json(v)))
}

fn created<T>(v: T) -> ApiResult<T> {
    Ok((StatusCode::CREATED, Json(v)))
}

fn bearer(headers: &HeaderMap) -> Result<Option<&str>, ApiError> {
    let Some(value) = headers.get(header::AUTHORIZATION) else {
        return Ok(None);
    };
    value
        .to_str()
        .ok()
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| Some(t.trim()))
        .ok_or_else(ApiError::unauthenticated)
}

fn caller(svc: &Service, headers: &HeaderMap) -> Result<Option<Account>, ApiError> {
    svc.authenticate(bearer(headers)?)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new("INVALID_REQUEST", e.to_string()))
}

/// Runs `f` with the caller resolved, off the async executor.
async fn call<R: Send + 'static>(
    svc: Shared,
    headers: HeaderMap,
    f: impl FnOnce(&Service, Option<&Account>) -> Result<R, ApiError> + Send + 'static,
) -> Result<R, ApiError> {
    tokio::task::spawn_blocking(move || {
        let who = caller(&svc, &headers)?;
        f(&svc, who.as_ref())
    })
    .await
    .map_err(|e| ApiError::new("STORAGE_ERROR", e.to_string()))?
}

async fn create_account(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<CreatedAccount> {
    let req: CreateAccount = parse(&body)?;
    created(call(svc, headers, move |s, c| s.create_account(c, req)).await?)
}

async fn register_benchmark(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Created> {
    let req: RegisterBenchmark = parse(&body)?;
    created(call(svc, headers, move |s, c| s.register_benchmark(c, req)).await?)
}

async fn get_benchmark(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<fedeval_core::Benchmark> {
    ok(call(svc, headers, move |s, c| {
        s.get_benchmark(c, &BenchmarkId::new(id))
    })
    .await?)
}

#[derive(Serialize)]
struct Done {
    ok: bool,
}

async fn activate(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Done> {
    call(svc, headers, move |s, c| {
        s.activate_benchmark(c, &BenchmarkId::new(id))
    })
    .await?;
    ok(Done { ok: true })
}

async fn retire(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Done> {
    call(svc, headers, move |s, c| {
        s.retire_benchmark(c, &BenchmarkId::new(id))
    })
    .await?;
    ok(Done { ok: true })
}

async fn release(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Done> {
    let req: SetReleasePolicy = parse(&body)?;
    call(svc, headers, move |s, c| {
        s.set_release_policy(c, &BenchmarkId::new(id), req.release_policy)
    })
    .await?;
    ok(Done { ok: true })
}

async fn results(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<fedeval_core::ResultsReport> {
    ok(call(svc, headers, move |s, c| {
        s.get_results(c, &BenchmarkId::new(id))
    })
    .await?)
}

async fn register_cube(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Created> {
    let req: RegisterCube = parse(&body)?;
    created(call(svc, headers, move |s, c| s.register_cube(c, req)).await?)
}

async fn get_cube(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<fedeval_core::CubeRecord> {
    ok(call(svc, headers, move |s, c| s.get_cube(c, &CubeId::new(id))).await?)
}

async fn register_dataset(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Created> {
    let req: RegisterDataset = parse(&body)?;
    created(call(svc, headers, move |s, c| s.register_dataset(c, req)).await?)
}

async fn pending(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(uid): Path<String>,
) -> ApiResult<PendingList> {
    let uid: ContentUid = uid
        .parse()
        .map_err(|_| ApiError::new("UNKNOWN_DATASET", "not a dataset uid"))?;
    ok(call(svc, headers, move |s, c| s.fetch_pending(c, &uid)).await?)
}

async fn request_association(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Created> {
    let req: RequestAssociation = parse(&body)?;
    created(call(svc, headers, move |s, c| s.request_association(c, req)).await?)
}

#[derive(Serialize)]
struct AssociationList {
    associations: Vec<fedeval_core::Association>,
}

async fn association_queue(
    State(svc): State<Shared>,
    headers: HeaderMap,
) -> ApiResult<AssociationList> {
    let associations = call(svc, headers, |s, c| s.association_queue(c)).await?;
    ok(AssociationList { associations })
}

async fn decide(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<fedeval_core::Association> {
    let req: Decision = parse(&body)?;
    ok(call(svc, headers, move |s, c| {
        s.decide_association(c, &AssociationId::new(id), req.decision)
    })
    .await?)
}

async fn submit_result(
    State(svc): State<Shared>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Created> {
    let req: SubmitResult = parse(&body)?;
    created(call(svc, headers, move |s, c| s.submit_result(c, req)).await?)
}

#[derive(Deserialize)]
struct AuditQuery {
    #[serde(default)]
    from_seq: u64,
}

async fn audit(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<AuditQuery>,
) -> ApiResult<AuditPage> {
    ok(call(svc, headers, move |s, c| s.audit(c, q.from_seq)).await?)
}

async fn not_found() -> ApiError {
    ApiError::new("NOT_FOUND", "no such route")
}

/// The API under [`API_PREFIX`], plus cube downloads under `/static` when
/// `static_dir` is given.
pub fn router(svc: Arc<Service>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/accounts", post(create_account))
        .route("/benchmarks", post(register_benchmark))
        .route("/benchmarks/{id}", get(get_benchmark))
        .route("/benchmarks/{id}/activate", post(activate))
        .route("/benchmarks/{id}/retire", post(retire))
        .route("/benchmarks/{id}/release", post(release))
        .route("/benchmarks/{id}/results", get(results))
        .route("/cubes", post(register_cube))
        .route("/cubes/{id}", get(get_cube))
        .route("/datasets", post(register_dataset))
        .route("/datasets/{uid}/pending", get(pending))
        .route(
            "/associations",
            post(request_association).get(association_queue),
        )
        .route("/associations/{id}/decision", post(decide))
        .route("/results", post(submit_result))
        .route("/audit", get(audit))
        .with_state(svc);
    let mut app = Router::new().nest(API_PREFIX, api);
    if let Some(dir) = static_dir {
        app = app.nest_service("/static", ServeDir::new(dir));
    }
    app.fallback(not_found)
}
