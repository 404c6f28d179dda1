//! HTTP JSON API over a loaded pair of ensembles.
//!
//! | method | path        | body                 | response                         |
//! |--------|-------------|----------------------|----------------------------------|
//! | POST   | `/classify` | `ClassifyRequest`    | array of `ClassifyResult`        |
//! | POST   | `/explain`  | `ClassifyRequest`    | array of per-instance reports    |
//! | GET    | `/schema`   |                      | class names and CiTO IRIs        |
//! | GET    | `/health`   |                      | status and bundle metadata       |
//!
//! Errors are returned as `{"error": "..."}` with a 4xx status.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use citefusion::service::{results_json, ClassifyRequest, Ensembles};
use citefusion::Error as CoreError;
use serde_json::json;
use tower_http::cors::CorsLayer;

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        let status = match rejection {
            JsonRejection::MissingJsonContentType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            JsonRejection::JsonSyntaxError(_) => StatusCode::BAD_REQUEST,
            JsonRejection::BytesRejection(_) => StatusCode::PAYLOAD_TOO_LARGE,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError {
            status,
            message: rejection.body_text(),
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e {
            CoreError::InvalidRequest(_) | CoreError::EmptyContext { .. } => StatusCode::BAD_REQUEST,
            CoreError::MissingBundle(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type AppState = Arc<Ensembles>;

fn json_body(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

async fn classify(
    State(ensembles): State<AppState>,
    payload: Result<Json<ClassifyRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(request) = payload?;
    let results = ensembles.classify(&request)?;
    Ok(json_body(results_json(&results).map_err(ApiError::from)?))
}

async fn explain(
    State(ensembles): State<AppState>,
    payload: Result<Json<ClassifyRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(request) = payload?;
    let reports = ensembles.explain(&request)?;
    Ok(Json(reports).into_response())
}

async fn schema(State(ensembles): State<AppState>) -> Response {
    Json(ensembles.schema_info()).into_response()
}

async fn health(State(ensembles): State<AppState>) -> Response {
    Json(json!({ "status": "ok", "bundles": ensembles.info() })).into_response()
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        message: "no such endpoint".into(),
    }
}

pub fn router(ensembles: Arc<Ensembles>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/classify", post(classify))
        .route("/explain", post(explain))
        .route("/schema", get(schema))
        .route("/health", get(health))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .layer(CorsLayer::permissive())
        .with_state(ensembles)
}

pub async fn serve(addr: SocketAddr, ensembles: Arc<Ensembles>, max_body_bytes: usize) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(ensembles, max_body_bytes))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

