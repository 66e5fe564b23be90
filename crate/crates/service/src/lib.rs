//! HTTP server exposing an expert registry for remote routing requests.
//!
//! Endpoints: `POST /v1/experts`, `GET /v1/experts`, `POST /v1/match`,
//! `GET /v1/health`. See [`wire`] for the JSON shapes.

mod error;
mod handler;
mod state;
pub mod wire;

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::net::TcpListener;

pub use error::ApiError;
pub use handler::{execute_match, request_sample};
pub use state::{AppState, ServerConfig, DEFAULT_MAX_BODY_BYTES, DEFAULT_MAX_EXPERTS};

use wire::{ExpertList, ExpertPayload, Health, MatchRequest, MatchResponse, RegisterResponse};

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let limit = state.config().max_body_bytes;
    Router::new()
        .route("/v1/experts", post(register).get(list))
        .route("/v1/match", post(match_sample))
        .route("/v1/health", get(health))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves `state` on an already-bound listener until `shutdown` resolves.
pub async fn run(
    listener: TcpListener,
    state: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, experts = state.snapshot().len(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

fn parse_json<T: DeserializeOwned>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let bytes = body.map_err(|r| {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::too_large(r.body_text())
        } else {
            ApiError::validation("body", r.body_text())
        }
    })?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "body".to_string() } else { path };
        ApiError::validation(field, e.into_inner())
    })
}

async fn register(
    State(state): State<Shared>,
    body: Result<Bytes, BytesRejection>,
) -> Result<(StatusCode, Json<RegisterResponse>), ApiError> {
    let payload: ExpertPayload = parse_json(body)?;
    let entry = payload.into_entry()?;
    let expert_id = entry.expert_id.clone();
    let index = state.register(entry).await?;
    tracing::info!(%expert_id, index, "registered expert");
    Ok((
        StatusCode::CREATED,
        Json(RegisterResponse {
            expert_id,
            index,
            experts: index + 1,
        }),
    ))
}

async fn list(State(state): State<Shared>) -> Json<ExpertList> {
    Json(ExpertList::of(&state.snapshot()))
}

async fn health(State(state): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        experts: state.snapshot().len(),
    })
}

async fn match_sample(
    State(state): State<Shared>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<MatchResponse>, ApiError> {
    let req: MatchRequest = parse_json(body)?;
    let registry = state.snapshot();
    tokio::task::spawn_blocking(move || execute_match(&registry, &req))
        .await
        .map_err(ApiError::internal)?
        .map(Json)
}
