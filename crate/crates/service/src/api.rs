//! HTTP API over an immutable corpus and model snapshot.
//!
//! Conventions shared with clients:
//! - screen coordinates are pixels with the origin at the top-left corner,
//!   `u` growing right and `v` growing down;
//! - `view_matrix` is 16 reals, row-major, mapping world to camera space;
//!   the camera looks down its local `-z` axis;
//! - `fov_y` is the vertical field of view in degrees.
//!
//! Endpoints:
//! - `GET /clouds` lists `{id, points, parts}`.
//! - `GET /clouds/{id}` streams `n` little-endian `f32` triples `x y z`
//!   followed by `n` little-endian `u32` labels.
//! - `POST /select` runs one selection; see [`SelectRequest`].

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use lasso_core::corpus::PointCloud;
use lasso_core::geometry::{cylinder_selection, normalize_lasso, CameraPose, CameraRaw, Point2};
use lasso_core::network::{Checkpoint, Network};
use lasso_core::predict::predict_selection;

/// A loaded model and the version string reported to clients.
#[derive(Debug)]
pub struct LoadedModel {
    pub network: Network<f32>,
    pub version: String,
}

impl LoadedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> lasso_core::Result<LoadedModel> {
        let m = &ckpt.metadata;
        Ok(LoadedModel {
            network: ckpt.to_network()?,
            version: format!("{}/epoch-{}/seed-{}", m.corpus_id, m.epoch, m.seed),
        })
    }
}

/// Shared, read-only server state.
#[derive(Clone, Debug)]
pub struct AppState {
    clouds: Arc<HashMap<String, PointCloud>>,
    model: Option<Arc<LoadedModel>>,
}

impl AppState {
    pub fn new(clouds: HashMap<String, PointCloud>, model: Option<LoadedModel>) -> AppState {
        AppState {
            clouds: Arc::new(clouds),
            model: model.map(Arc::new),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMethod {
    #[default]
    Lassonet,
    Cylinder,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectRequest {
    pub cloud_id: String,
    pub camera: CameraRaw,
    /// Raw stroke vertices `[u, v]`; open or self-intersecting strokes are
    /// normalized server-side.
    pub lasso: Vec<Point2>,
    #[serde(default)]
    pub method: SelectMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectResponse {
    /// Ascending point indices.
    pub selected: Vec<usize>,
    /// Selection probability of each entry of `selected`; absent for the
    /// cylinder method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    /// Wall time of the selection call alone.
    pub timing_ms: f64,
    /// `none` when no model is involved.
    pub model_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudSummary {
    pub id: String,
    pub points: usize,
    pub parts: usize,
}

/// Error body: `{"error": kind, "message": text}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

impl From<lasso_core::Error> for ApiError {
    fn from(e: lasso_core::Error) -> Self {
        use lasso_core::Error as E;
        let status = match &e {
            E::DegenerateStroke(_) | E::InvalidCamera(_) => StatusCode::BAD_REQUEST,
            E::UnknownCloud(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.kind, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/clouds", get(list_clouds))
        .route("/clouds/:id", get(cloud_points))
        .route("/select", post(select))
        .with_state(state)
}

async fn list_clouds(State(state): State<AppState>) -> Json<Vec<CloudSummary>> {
    let mut out: Vec<CloudSummary> = state
        .clouds
        .values()
        .map(|c| CloudSummary {
            id: c.id.clone(),
            points: c.len(),
            parts: c.num_parts(),
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out)
}

/// Binary encoding served by `GET /clouds/{id}`.
pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 * cloud.len());
    for p in &cloud.points {
        for v in [p.x, p.y, p.z] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for l in &cloud.labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    buf
}

async fn cloud_points(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let cloud = state
        .clouds
        .get(&id)
        .ok_or_else(|| ApiError::from(lasso_core::Error::UnknownCloud(id)))?;
    Ok((
        [(header::CONTENT_TYPE, "application/octet-stream")],
        encode_cloud(cloud),
    )
        .into_response())
}

async fn select(State(state): State<AppState>, body: Bytes) -> Result<Json<SelectResponse>, ApiError> {
    let req: SelectRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.to_string()))?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || run_select(&state, req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map(Json)
}

/// Validate and execute one selection request.
pub fn run_select(state: &AppState, req: SelectRequest) -> Result<SelectResponse, ApiError> {
    let cloud = state
        .clouds
        .get(&req.cloud_id)
        .ok_or_else(|| lasso_core::Error::UnknownCloud(req.cloud_id.clone()))?;
    let camera = CameraPose::try_from(req.camera)?;
    let lasso = normalize_lasso(&req.lasso)?;
    match req.method {
        SelectMethod::Cylinder => {
            let start = Instant::now();
            let selected = cylinder_selection(&cloud.points, &camera, &lasso);
            Ok(SelectResponse {
                selected,
                probabilities: None,
                timing_ms: start.elapsed().as_secs_f64() * 1e3,
                model_version: "none".into(),
            })
        }
        SelectMethod::Lassonet => {
            let model = state.model.as_ref().ok_or_else(|| {
                ApiError::new(
                    StatusCode::CONFLICT,
                    "NoModel",
                    "no model loaded; start the server with --model",
                )
            })?;
            let start = Instant::now();
            let sel = predict_selection(&cloud.points, &camera, &lasso, &model.network)?;
            let timing_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(SelectResponse {
                probabilities: Some(sel.selected_probabilities()),
                selected: sel.selected,
                timing_ms,
                model_version: model.version.clone(),
            })
        }
    }
}
