//! REST endpoints.
//!
//! | method | path                       |                                   |
//! |--------|----------------------------|-----------------------------------|
//! | POST   | `/datasets`                | multipart upload, opens a session |
//! | GET    | `/sessions/{id}/layout`    | current layout document           |
//! | PUT    | `/sessions/{id}/selection` | selection delta, returns layout   |
//! | GET    | `/sessions/{id}/svg`       | SVG with current highlights       |
//! | GET    | `/healthz`                 | liveness                          |
//!
//! Errors are JSON `{"error": {"code": ..., "message": ...}}` where `code`
//! is the engine's error name (`RangeError`, `IngestError`, ...) or one of
//! `NotFound`, `StaleVersion`, `BadRequest`.

use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use maptrix::render::render;
use maptrix::selection::SelectionState;
use maptrix::Error;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::session::{Computed, Inputs, SelectionDelta, Session, Store, UpdateError};

/// Uploads larger than this are refused.
pub const MAX_UPLOAD_BYTES: usize = 32 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "BadRequest",
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "NotFound",
            message: format!("no session {id}"),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) | Error::Qp(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Serialize)]
struct Created<'a> {
    session: &'a str,
    version: u64,
    mode: maptrix::assembler::LayoutMode,
    layout_hash: &'a str,
}

#[derive(Serialize)]
struct LayoutResponse<'a> {
    session: &'a str,
    version: u64,
    layout_hash: &'a str,
    /// Whether this request computed a new layout.
    relayout: bool,
    selection: &'a SelectionState,
    layout: &'a RawValue,
}

fn layout_response(session: &Session, selection: &SelectionState, computed: &Computed, relayout: bool) -> Response {
    Json(LayoutResponse {
        session: &session.id,
        version: selection.version,
        layout_hash: &computed.hash,
        relayout,
        selection,
        layout: &computed.document,
    })
    .into_response()
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/datasets", post(create_session))
        .route("/sessions/{id}/layout", get(get_layout))
        .route("/sessions/{id}/selection", put(put_selection))
        .route("/sessions/{id}/svg", get(get_svg))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(store)
}

async fn healthz(State(store): State<Arc<Store>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "sessions": store.len() }))
}

/// Multipart fields: `flows` (CSV), `boundaries` (GeoJSON), optionally
/// `destination_boundaries` (GeoJSON, for two-country data) and `mode`
/// (`same-country` or `two-country`).
async fn create_session(State(store): State<Arc<Store>>, mut form: Multipart) -> ApiResult<Response> {
    let (mut flows, mut boundaries, mut destination_boundaries, mut two_country) = (None, None, None, false);
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("malformed multipart body: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let text = field
            .text()
            .await
            .map_err(|e| ApiError::bad_request(format!("field {name}: {e}")))?;
        match name.as_str() {
            "flows" => flows = Some(text),
            "boundaries" => boundaries = Some(text),
            "destination_boundaries" => destination_boundaries = Some(text),
            "mode" => {
                two_country = match text.trim() {
                    "two-country" => true,
                    "same-country" => false,
                    other => return Err(Error::Mode(format!("unknown mode {other:?}")).into()),
                }
            }
            _ => return Err(ApiError::bad_request(format!("unexpected field {name:?}"))),
        }
    }
    let (Some(flows), Some(boundaries)) = (flows, boundaries) else {
        return Err(ApiError::bad_request("both `flows` and `boundaries` fields are required"));
    };
    let inputs = Inputs {
        flows,
        boundaries,
        destination_boundaries,
        two_country,
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let config = store.config.clone();
    let session = tokio::task::spawn_blocking(move || Session::create(id, inputs, &config))
        .await
        .map_err(|e| Error::Io(format!("layout task failed: {e}")))??;
    let session = store.insert(session);
    tracing::info!(session = %session.id, mode = ?session.mode, "session created");
    let body = Created {
        session: &session.id,
        version: 0,
        mode: session.mode,
        layout_hash: &session.base.hash,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

fn find(store: &Store, id: &str) -> ApiResult<Arc<Session>> {
    store.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn get_layout(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = find(&store, &id)?;
    let state = session.state.lock().await;
    Ok(layout_response(&session, &state.selection, &state.current, false))
}

async fn put_selection(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<Response> {
    let session = find(&store, &id)?;
    let delta: SelectionDelta =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("selection: {e}")))?;
    match session.update(delta).await {
        Ok(update) => Ok(layout_response(&session, &update.selection, &update.computed, update.relayout)),
        Err(UpdateError::Stale { current }) => Err(ApiError {
            status: StatusCode::CONFLICT,
            code: "StaleVersion",
            message: format!("selection is at version {current}"),
        }),
        Err(UpdateError::Invalid(e)) => Err(e.into()),
    }
}

async fn get_svg(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = find(&store, &id)?;
    let (computed, selection) = {
        let state = session.state.lock().await;
        (state.current.clone(), state.selection.clone())
    };
    let svg = render(&computed.layout, &computed.layout.config.style, Some(&selection))?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}
