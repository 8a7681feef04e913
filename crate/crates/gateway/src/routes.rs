use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use chatbank_core::envelope::SessionId;
use serde_json::{json, Value};

use crate::api::{
    CloseReply, DecisionReply, DecisionRequest, IngestReply, MessageReply, OpenSessionRequest, OpenSessionResponse,
    PostMessageRequest, ReloadReply, SessionView,
};
use crate::error::ApiError;
use crate::service::Gateway;

type Shared = State<Arc<Gateway>>;

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(view_session).delete(close_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/transactions/{tx_id}/decision", post(decide))
        .route("/admin/guardrails/reload", post(reload_blocklist))
        .route("/admin/knowledge", post(ingest_knowledge))
        .with_state(gateway)
}

fn body<T>(json: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    json.map(|Json(v)| v).map_err(|e| ApiError::InvalidInput(e.body_text()))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn open_session(
    State(g): Shared,
    req: Result<Json<OpenSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<OpenSessionResponse>), ApiError> {
    let req = body(req)?;
    Ok((StatusCode::CREATED, Json(g.open_session(&req.account_id)?)))
}

async fn view_session(State(g): Shared, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(g.view_session(&SessionId::new(id)).await?))
}

async fn close_session(State(g): Shared, Path(id): Path<String>) -> Result<Json<CloseReply>, ApiError> {
    Ok(Json(g.close_session(&SessionId::new(id)).await?))
}

async fn post_message(
    State(g): Shared,
    Path(id): Path<String>,
    req: Result<Json<PostMessageRequest>, JsonRejection>,
) -> Result<Json<MessageReply>, ApiError> {
    let req = body(req)?;
    Ok(Json(g.post_message(&SessionId::new(id), req).await?))
}

async fn decide(
    State(g): Shared,
    Path((id, tx_id)): Path<(String, String)>,
    req: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<DecisionReply>, ApiError> {
    let req = body(req)?;
    Ok(Json(g.decide(&SessionId::new(id), &tx_id, req).await?))
}

async fn reload_blocklist(State(g): Shared, headers: HeaderMap, text: String) -> Result<Json<ReloadReply>, ApiError> {
    Ok(Json(g.reload_blocklist(bearer(&headers), &text)?))
}

async fn ingest_knowledge(State(g): Shared, headers: HeaderMap, text: String) -> Result<Json<IngestReply>, ApiError> {
    Ok(Json(g.ingest_knowledge(bearer(&headers), &text)?))
}
