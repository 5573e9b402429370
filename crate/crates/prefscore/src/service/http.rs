use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::campaign::{Campaign, ServiceError, Submission};
use super::qc::qc_report;

pub type Shared = Arc<Mutex<Campaign>>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, retry) = match &self {
            ServiceError::UnknownAnnotator(_) => (StatusCode::FORBIDDEN, None),
            ServiceError::UnknownSession(_) | ServiceError::UnknownCampaign(_) | ServiceError::UnknownTask(_) => {
                (StatusCode::NOT_FOUND, None)
            }
            ServiceError::Guidelines { retry_after_ms } | ServiceError::TooEarly { retry_after_ms } => {
                (StatusCode::TOO_EARLY, Some(*retry_after_ms))
            }
            ServiceError::Locked { retry_after_ms, .. } => (StatusCode::LOCKED, *retry_after_ms),
            ServiceError::Duplicate(_) => (StatusCode::CONFLICT, None),
            ServiceError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, None),
            ServiceError::Config(_) | ServiceError::Log { .. } => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        let mut body = json!({ "error": self.to_string() });
        if let Some(ms) = retry {
            body["retry_after_ms"] = json!(ms);
        }
        (status, Json(body)).into_response()
    }
}

fn lock(state: &Shared) -> std::sync::MutexGuard<'_, Campaign> {
    // a panic mid-request leaves the log as the source of truth; keep serving
    state.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Deserialize)]
struct StartSession {
    annotator: String,
    #[serde(default)]
    category: Option<String>,
}

async fn start_session(State(state): State<Shared>, Json(req): Json<StartSession>) -> Response {
    let result = lock(&state).start_session(&req.annotator, req.category.as_deref());
    match result {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn session(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match lock(&state).session(&id) {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn next_task(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    let result = lock(&state).next_task(&id);
    match result {
        Ok(t) => Json(t).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn submit(State(state): State<Shared>, Path(id): Path<String>, Json(sub): Json<Submission>) -> Response {
    let result = lock(&state).submit(&id, sub);
    match result {
        Ok(()) => Json(json!({ "accepted": true })).into_response(),
        Err(e) => e.into_response(),
    }
}

fn campaign_guard(c: &Campaign, id: &str) -> Result<(), ServiceError> {
    if c.config().id == id {
        Ok(())
    } else {
        Err(ServiceError::UnknownCampaign(id.into()))
    }
}

async fn campaign_info(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    let c = lock(&state);
    if let Err(e) = campaign_guard(&c, &id) {
        return e.into_response();
    }
    let cfg = c.config();
    Json(json!({
        "id": cfg.id,
        "dimensions": cfg.dimensions,
        "categories": cfg.categories.keys().collect::<Vec<_>>(),
        "guidelines_min_ms": cfg.guidelines_min_ms,
        "pointwise_min_view_ms": cfg.pointwise_min_view_ms,
        "pairwise_min_view_ms": cfg.pairwise_min_view_ms,
    }))
    .into_response()
}

async fn qc(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    let c = lock(&state);
    if let Err(e) = campaign_guard(&c, &id) {
        return e.into_response();
    }
    Json(qc_report(&c.config().id, &c.roster(), c.records())).into_response()
}

#[derive(Deserialize)]
struct ExportQuery {
    kind: String,
}

fn jsonl<T: serde::Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("row serialises"));
        out.push('\n');
    }
    out
}

async fn export(State(state): State<Shared>, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> Response {
    let c = lock(&state);
    if let Err(e) = campaign_guard(&c, &id) {
        return e.into_response();
    }
    let body = match q.kind.as_str() {
        "ratings" => jsonl(&c.export_ratings()),
        "judgments" => jsonl(&c.export_judgments()),
        other => return ServiceError::Invalid(format!("unknown export kind {other}")).into_response(),
    };
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

/// All API routes, plus `/images` and the UI bundle when those directories
/// are configured.
pub fn router(state: Shared) -> Router {
    let (image_dir, ui_dir) = {
        let c = lock(&state);
        (c.config().image_dir.clone(), c.config().ui_dir.clone())
    };
    let mut app = Router::new()
        .route("/session", post(start_session))
        .route("/session/{id}", get(session))
        .route("/session/{id}/task", get(next_task))
        .route("/session/{id}/submit", post(submit))
        .route("/campaign/{id}", get(campaign_info))
        .route("/campaign/{id}/qc", get(qc))
        .route("/campaign/{id}/export", get(export))
        .with_state(state);
    if let Some(dir) = image_dir {
        app = app.nest_service("/images", ServeDir::new(dir));
    }
    if let Some(dir) = ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app
}
