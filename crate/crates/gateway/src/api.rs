//! Loopback HTTP JSON API over an [`Engine`].

use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, Method, StatusCode, Uri};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::net::TcpListener;
use tracing::info;

use crate::engine::Engine;
use crate::protocol::{
    ApiError, ApiErrorKind, CommentActionRequest, PostMessageRequest, SelectRequest, TaskRunRequest,
    WorkflowRunRequest,
};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.kind.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// JSON body extractor whose failures are structured [`ApiError`]s:
/// syntax errors are 400, well-formed JSON of the wrong shape is 422. An
/// empty body reads as `{}`.
pub struct JsonBody<T>(pub T);

impl<S, T> FromRequest<S> for JsonBody<T>
where
    S: Send + Sync,
    T: DeserializeOwned,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| {
            let kind = if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
                ApiErrorKind::PayloadTooLarge
            } else {
                ApiErrorKind::MalformedJson
            };
            ApiError::new(kind, e.body_text())
        })?;
        let body: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        // syntax first, so a truncated body is 400 even when its prefix
        // already has the wrong shape
        let value: serde_json::Value = serde_json::from_slice(body)
            .map_err(|e| ApiError::new(ApiErrorKind::MalformedJson, format!("request body: {e}")))?;
        T::deserialize(value)
            .map(JsonBody)
            .map_err(|e| ApiError::invalid(format!("request body: {e}")))
    }
}

type Shared = Arc<Engine>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(engine: Shared) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/drivers", get(drivers))
        .route("/v1/drivers/{id}/activity", get(activity))
        .route("/v1/actions/comment", post(comment))
        .route("/v1/tasks/{id}/run", post(run_task))
        .route("/v1/workflows/{id}/run", post(run_workflow))
        .route("/v1/chat/sessions", post(create_session))
        .route("/v1/chat/sessions/{id}", get(get_session))
        .route("/v1/chat/sessions/{id}/messages", post(post_message))
        .route("/v1/chat/sessions/{id}/select", post(select))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(middleware::from_fn_with_state(engine.clone(), authorize))
        .with_state(engine)
}

async fn authorize(State(engine): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &engine.config().auth_token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if !presented.is_some_and(|p| constant_time_eq(p.as_bytes(), token.as_bytes())) {
            return ApiError::new(ApiErrorKind::Unauthorized, "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn not_found(method: Method, uri: Uri) -> ApiError {
    ApiError::not_found(format!("no route for {method} {}", uri.path()))
}

async fn method_not_allowed(method: Method, uri: Uri) -> ApiError {
    ApiError::new(
        ApiErrorKind::MethodNotAllowed,
        format!("{method} is not allowed on {}", uri.path()),
    )
}

async fn health(State(engine): State<Shared>) -> ApiResult<crate::protocol::Health> {
    Ok(Json(engine.health()))
}

async fn drivers(State(engine): State<Shared>) -> ApiResult<Vec<crate::protocol::DriverView>> {
    Ok(Json(engine.driver_views()))
}

async fn activity(State(engine): State<Shared>, Path(id): Path<String>) -> ApiResult<multimind_core::manager::Activity> {
    engine.activity(&id).map(Json)
}

async fn comment(
    State(engine): State<Shared>,
    JsonBody(req): JsonBody<CommentActionRequest>,
) -> ApiResult<crate::protocol::CommentActionResult> {
    engine.comment_action(req).await.map(Json)
}

async fn run_task(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<TaskRunRequest>,
) -> ApiResult<crate::protocol::TaskRunResponse> {
    engine.run_task(&id, req).await.map(Json)
}

async fn run_workflow(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<WorkflowRunRequest>,
) -> ApiResult<multimind_core::workflow::WorkflowResult> {
    engine.run_workflow(&id, req).await.map(Json)
}

async fn create_session(State(engine): State<Shared>) -> (StatusCode, Json<crate::chat::ChatSession>) {
    (StatusCode::CREATED, Json(engine.create_session()))
}

async fn get_session(State(engine): State<Shared>, Path(id): Path<String>) -> ApiResult<crate::chat::ChatSession> {
    engine.session(&id).await.map(Json)
}

async fn post_message(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<PostMessageRequest>,
) -> ApiResult<crate::protocol::PostMessageResponse> {
    engine.post_message(&id, req).await.map(Json)
}

async fn select(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<SelectRequest>,
) -> ApiResult<crate::chat::ChatSession> {
    engine.select(&id, req).await.map(Json)
}

/// Binds the configured port on 127.0.0.1 and serves until the future is
/// dropped.
pub async fn serve(engine: Shared) -> std::io::Result<()> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, engine.config().listen_port));
    let listener = TcpListener::bind(addr).await?;
    serve_on(listener, engine).await
}

pub async fn serve_on(listener: TcpListener, engine: Shared) -> std::io::Result<()> {
    info!(addr = %listener.local_addr()?, "gateway listening");
    axum::serve(listener, router(engine)).await
}
