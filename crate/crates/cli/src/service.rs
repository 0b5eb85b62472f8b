//! HTTP scoring service.
//!
//! | route                          | purpose                                 |
//! |--------------------------------|-----------------------------------------|
//! | `POST /v1/score`               | score one rollout group                 |
//! | `GET /v1/health`               | liveness plus build name and version    |
//! | `GET /v1/history/{sample_id}`  | stored judge-score snapshot, or 404     |
//!
//! Scoring runs on the blocking pool, so a slow judge never stalls the
//! accept loop. Errors come back as `{"error": ..., "status": ...}`.

use std::future::Future;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use sif_core::scoring::{ScoreRequest, Scorer};
use tokio::net::TcpListener;

fn error(status: u16, message: impl Into<String>) -> Response {
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (
        code,
        Json(json!({"error": message.into(), "status": status})),
    )
        .into_response()
}

async fn score(State(scorer): State<Scorer>, body: Bytes) -> Response {
    let req: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(400, format!("invalid request: {e}")),
    };
    match tokio::task::spawn_blocking(move || scorer.score(&req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => {
            tracing::info!(status = e.status(), error = %e, "score request failed");
            error(e.status(), e.to_string())
        }
        Err(e) => error(500, format!("scoring task failed: {e}")),
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

async fn history(State(scorer): State<Scorer>, Path(sample_id): Path<String>) -> Response {
    match scorer.history(&sample_id) {
        Some(entry) => Json(json!({
            "sample_id": sample_id,
            "iteration": entry.iteration,
            "scores": entry.scores,
            "mean": entry.mean(),
        }))
        .into_response(),
        None => error(404, format!("no history for sample {sample_id:?}")),
    }
}

pub fn router(scorer: Scorer) -> Router {
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/health", get(health))
        .route("/v1/history/{sample_id}", get(history))
        .with_state(scorer)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    scorer: Scorer,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(scorer))
        .with_graceful_shutdown(shutdown)
        .await
}
