//! JSON API over [`Service`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clarify_core::model::SkipReason;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::service::{RegenerateRequest, Service, SubmitRequest};
use crate::state::ExportFilter;

type Shared = Arc<Service>;
type ApiResult<T> = Result<T, ServiceError>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Unauthenticated => StatusCode::UNAUTHORIZED,
            ServiceError::Forbidden | ServiceError::TutorialPending | ServiceError::Policy(_) => StatusCode::FORBIDDEN,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Violations(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Backend(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self, "request failed");
        }
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        match &self {
            ServiceError::Violations(v) => body["violations"] = json!(v),
            ServiceError::Backend(_) => body["retriable"] = json!(true),
            _ => {}
        }
        (status, Json(body)).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> ApiResult<&str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .ok_or(ServiceError::Unauthenticated)
}

#[derive(Deserialize)]
struct LoginBody {
    token: String,
}

#[derive(Deserialize)]
struct SkipBody {
    contribution_id: String,
    reason: SkipReason,
}

async fn login(State(s): State<Shared>, Json(b): Json<LoginBody>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.login(&b.token)?))
}

async fn task(State(s): State<Shared>, h: HeaderMap) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.next_task(bearer(&h)?)?))
}

async fn annotations(State(s): State<Shared>, h: HeaderMap, Json(b): Json<SubmitRequest>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.submit(bearer(&h)?, b)?))
}

async fn regenerate(
    State(s): State<Shared>,
    h: HeaderMap,
    Json(b): Json<RegenerateRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.regenerate(bearer(&h)?, b).await?))
}

async fn skip(State(s): State<Shared>, h: HeaderMap, Json(b): Json<SkipBody>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.skip(bearer(&h)?, &b.contribution_id, b.reason)?))
}

async fn mine(State(s): State<Shared>, h: HeaderMap) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.my_annotations(bearer(&h)?)?))
}

async fn admin_annotations(State(s): State<Shared>, h: HeaderMap) -> ApiResult<impl IntoResponse> {
    let (progress, records) = s.admin_annotations(bearer(&h)?)?;
    Ok(Json(json!({ "progress": progress, "records": records })))
}

async fn export(State(s): State<Shared>, h: HeaderMap, Query(f): Query<ExportFilter>) -> ApiResult<impl IntoResponse> {
    let body = s.export(bearer(&h)?, f)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

/// Routes of the annotation API, with the UI bundle served from
/// `static_dir` when given.
pub fn router(service: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/login", post(login))
        .route("/api/task", get(task))
        .route("/api/annotations", post(annotations))
        .route("/api/clarify/regenerate", post(regenerate))
        .route("/api/skip", post(skip))
        .route("/api/me/annotations", get(mine))
        .route("/api/admin/annotations", get(admin_annotations))
        .route("/api/admin/export", get(export))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(service: Shared, bind: &str, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(service, static_dir)).await
}
