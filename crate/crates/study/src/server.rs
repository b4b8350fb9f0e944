//! HTTP API for raters. Responses carry only opaque trial ids and image
//! URLs; which image is real and the synthetic condition stay server-side
//! until an authenticated export.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::error::{Result, StudyError};
use crate::plan::StudyPlan;
use crate::store::{RatingRecord, RatingStore};
use msynth_core::dataio::{read_slice_file, rescale_channel};
use msynth_core::synthesis::encode_grayscale_png;

pub struct StudyState {
    pub store: RatingStore,
    pub image_root: PathBuf,
    /// Bearer token required by `/api/export`; export is disabled when `None`.
    pub admin_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub trial_id: usize,
    pub left_image_url: String,
    pub right_image_url: String,
    pub index: usize,
    pub total: usize,
}

#[derive(Debug, Deserialize)]
pub struct RatingRequest {
    pub trial_id: usize,
    pub stars: i64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RatingAck {
    pub trial_id: usize,
    pub stars: u8,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StudyExport {
    pub plan: StudyPlan,
    pub ratings: Vec<RatingRecord>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let status = match &e {
            StudyError::UnknownRater(_) | StudyError::UnknownTrial { .. } => StatusCode::NOT_FOUND,
            StudyError::InvalidStars(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StudyError::Duplicate { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
            return ApiError(status, "internal error".into());
        }
        ApiError(status, e.to_string())
    }
}

pub fn router(state: Arc<StudyState>) -> Router {
    Router::new()
        .route("/api/raters/{id}/next", get(next_trial))
        .route("/api/raters/{id}/ratings", post(submit_rating))
        .route("/api/export", get(export))
        .route("/img/{rater}/{trial}/{side}", get(image))
        .with_state(state)
}

async fn next_trial(State(st): State<Arc<StudyState>>, Path(id): Path<String>) -> std::result::Result<Response, ApiError> {
    let total = st.store.plan().trials(&id).map_or(0, <[_]>::len);
    match st.store.next_trial(&id)? {
        None => Ok(StatusCode::NO_CONTENT.into_response()),
        Some(t) => Ok(Json(TrialView {
            trial_id: t.trial_id,
            left_image_url: format!("/img/{id}/{}/left.png", t.trial_id),
            right_image_url: format!("/img/{id}/{}/right.png", t.trial_id),
            index: t.order,
            total,
        })
        .into_response()),
    }
}

async fn submit_rating(
    State(st): State<Arc<StudyState>>,
    Path(id): Path<String>,
    Json(req): Json<RatingRequest>,
) -> std::result::Result<Response, ApiError> {
    let st2 = st.clone();
    // the store fsyncs, so keep it off the async workers
    let record = tokio::task::spawn_blocking(move || st2.store.submit(&id, req.trial_id, req.stars))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((
        StatusCode::CREATED,
        Json(RatingAck {
            trial_id: record.trial_id,
            stars: record.stars,
        }),
    )
        .into_response())
}

async fn export(State(st): State<Arc<StudyState>>, headers: HeaderMap) -> std::result::Result<Response, ApiError> {
    let expected = st
        .admin_token
        .as_deref()
        .ok_or_else(|| ApiError(StatusCode::FORBIDDEN, "export is disabled".into()))?;
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given != Some(expected) {
        return Err(ApiError(StatusCode::UNAUTHORIZED, "admin token required".into()));
    }
    Ok(Json(StudyExport {
        plan: st.store.plan().clone(),
        ratings: st.store.snapshot(),
    })
    .into_response())
}

async fn image(
    State(st): State<Arc<StudyState>>,
    Path((rater, trial, side)): Path<(String, usize, String)>,
) -> std::result::Result<Response, ApiError> {
    let t = st.store.plan().trial(&rater, trial).ok_or_else(|| {
        ApiError::from(StudyError::UnknownTrial {
            rater: rater.clone(),
            trial,
        })
    })?;
    let rel = match side.as_str() {
        "left.png" => &t.left,
        "right.png" => &t.right,
        _ => return Err(ApiError(StatusCode::NOT_FOUND, "no such image".into())),
    };
    let path = st.image_root.join(rel);
    let png = tokio::task::spawn_blocking(move || render_png(&path))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], png).into_response())
}

/// Renders the first channel of an MSL file, min-max scaled, as 8-bit PNG.
pub fn render_png(path: &std::path::Path) -> Result<Vec<u8>> {
    let stack = read_slice_file(path)?;
    let mut plane = stack.channel(0).to_vec();
    rescale_channel(&mut plane)?;
    Ok(encode_grayscale_png(&plane, stack.height(), stack.width())?)
}

/// Binds `addr`, mapping failure to a bind error.
pub async fn bind(addr: &str) -> Result<TcpListener> {
    TcpListener::bind(addr).await.map_err(|source| StudyError::Bind {
        addr: addr.to_string(),
        source,
    })
}

/// Serves the API on an already bound listener until the process exits.
pub async fn serve(listener: TcpListener, state: Arc<StudyState>) -> Result<()> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    log::info!("study service listening on {addr:?}");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| StudyError::io("<server>", e))
}

/// Checks that every image referenced by the plan exists under the root.
pub fn check_images(plan: &StudyPlan, root: &std::path::Path) -> Result<()> {
    for trials in plan.raters.values() {
        for t in trials {
            for rel in [&t.left, &t.right] {
                if !root.join(rel).is_file() {
                    return Err(StudyError::Plan(format!("missing image {}", root.join(rel).display())));
                }
            }
        }
    }
    Ok(())
}
