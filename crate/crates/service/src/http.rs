//! JSON-over-HTTP API for the labeling console.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create from `{dataset_path, format?, config?}` |
//! | GET | `/sessions` | list session ids and unrecoverable journals |
//! | GET | `/sessions/{id}` | status and counters |
//! | GET | `/sessions/{id}/batch` | pending batch with model suggestions |
//! | POST | `/sessions/{id}/labels` | `{sample_id, concepts}` |
//! | POST | `/sessions/{id}/advance` | close the round once fully labeled |
//! | GET | `/sessions/{id}/metrics` | per-round history |
//! | GET | `/sessions/{id}/clusters` | cluster summaries |
//! | GET | `/vocabulary?session={id}` | concept names |
//!
//! Errors are `{"error": "..."}` with 400 for bad input, 404 for unknown
//! sessions, 409 for requests that do not fit the session's state and 500
//! for internal failures.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crm_active::clustering::ClusterSummary;
use crm_active::engine::RoundMetrics;

use crate::store::{
    AdvanceResult, BatchView, CreateRequest, LabelAck, LabelRequest, SessionInfo, SessionStore,
    StoreError,
};

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict(_) => StatusCode::CONFLICT,
            StoreError::BadRequest(_) => StatusCode::BAD_REQUEST,
            StoreError::Unavailable { .. } | StoreError::Journal(_) | StoreError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError {
            status: r.status(),
            message: r.body_text(),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError {
            status: r.status(),
            message: r.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Session work is CPU-bound and takes a blocking mutex, so it runs off the
/// async executor.
async fn blocking<T, F>(store: Arc<SessionStore>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> Result<T, StoreError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::from(StoreError::Internal(e.to_string())))?
        .map(Json)
        .map_err(ApiError::from)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionList {
    pub sessions: Vec<String>,
    pub failed: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct VocabularyQuery {
    session: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Vocabulary {
    pub concepts: Vec<String>,
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/batch", get(batch))
        .route("/sessions/{id}/labels", post(labels))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/clusters", get(clusters))
        .route("/vocabulary", get(vocabulary))
        .with_state(store)
}

async fn create(
    State(store): State<Arc<SessionStore>>,
    req: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = req?;
    let info = blocking(store, move |s| s.create(req)).await?;
    Ok((StatusCode::CREATED, info))
}

async fn list(State(store): State<Arc<SessionStore>>) -> ApiResult<SessionList> {
    Ok(Json(SessionList {
        sessions: store.session_ids(),
        failed: store.failures(),
    }))
}

async fn show(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<SessionInfo> {
    blocking(store, move |s| s.info(&id)).await
}

async fn batch(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<BatchView> {
    blocking(store, move |s| s.batch(&id)).await
}

async fn labels(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    req: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<LabelAck> {
    let Json(req) = req?;
    blocking(store, move |s| s.submit(&id, req)).await
}

async fn advance(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<AdvanceResult> {
    blocking(store, move |s| s.advance(&id)).await
}

async fn metrics(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Vec<RoundMetrics>> {
    blocking(store, move |s| s.metrics(&id)).await
}

async fn clusters(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Vec<ClusterSummary>> {
    blocking(store, move |s| s.clusters(&id)).await
}

async fn vocabulary(
    State(store): State<Arc<SessionStore>>,
    q: Result<Query<VocabularyQuery>, QueryRejection>,
) -> ApiResult<Vocabulary> {
    let Query(q) = q?;
    blocking(store, move |s| {
        s.vocabulary(&q.session)
            .map(|concepts| Vocabulary { concepts })
    })
    .await
}

/// Serves until ctrl-c.
pub async fn serve(store: Arc<SessionStore>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
