//! HTTP API over a directory of tiles.
//!
//! | method | path                          | body / query                                   |
//! |--------|-------------------------------|------------------------------------------------|
//! | GET    | `/tiles`                      |                                                |
//! | GET    | `/tiles/{id}`                 |                                                |
//! | GET    | `/tiles/{id}/mesh.bin`        | see [`meshbin`]                                |
//! | POST   | `/tiles/{id}/label`           | `{"faces"\|"segments": [..], "class": 0..=6}`  |
//! | POST   | `/tiles/{id}/split_planar`    | `{"segment", "max_distance", "max_angle", "min_region_faces"}` |
//! | POST   | `/tiles/{id}/split_stroke`    | `{"stroke": [face ids], "max_distance"}`       |
//! | GET    | `/tiles/{id}/segments`        | `?prob_max&area_min&area_max&class`            |
//! | GET    | `/tiles/{id}/progress`        |                                                |
//! | POST   | `/tiles/{id}/save`            |                                                |
//!
//! Errors are `{"error": message}` with status 400 (bad request), 404
//! (unknown tile), 409 (save in progress) or 500.
//!
//! Each open tile keeps its current session behind an `Arc`. Edits on a tile
//! are serialised by a per-tile mutex and work on a copy that replaces the
//! current one when the edit succeeds, so reads take a snapshot and never
//! wait for an edit.

pub mod meshbin;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use meshlabel::features::FEATURE_DIM;
use meshlabel::forest::ForestModel;
use meshlabel::session::{AnnotationSession, EditRecord, PlanarThresholds, Predictor, SessionError, Target, TileStore};
use meshlabel::{ClassId, SegmentationParams};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("internal: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Session(e) => match e {
                SessionError::UnknownTile(_) => StatusCode::NOT_FOUND,
                SessionError::Locked(_) => StatusCode::CONFLICT,
                SessionError::EmptyTarget
                | SessionError::UnknownFace(_)
                | SessionError::UnknownSegment(_)
                | SessionError::InvalidFilter(_)
                | SessionError::Segmentation(_) => StatusCode::BAD_REQUEST,
                SessionError::Model(_) | SessionError::Format(_) | SessionError::Io(_) => {
                    StatusCode::INTERNAL_SERVER_ERROR
                }
            },
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Slot {
    edit: Mutex<()>,
    current: RwLock<Arc<AnnotationSession>>,
}

impl Slot {
    fn snapshot(&self) -> Arc<AnnotationSession> {
        self.current.read().unwrap().clone()
    }
}

/// A classifier used to pre-label freshly opened tiles.
pub struct LoadedModel {
    pub model: ForestModel,
    pub mask: [bool; FEATURE_DIM],
}

pub struct AppState {
    store: TileStore,
    model: Option<LoadedModel>,
    params: SegmentationParams,
    slots: Mutex<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    pub fn new(store: TileStore, model: Option<LoadedModel>, params: SegmentationParams) -> Arc<AppState> {
        Arc::new(AppState {
            store,
            model,
            params,
            slots: Mutex::new(HashMap::new()),
        })
    }

    fn open_slot(&self, tile_id: &str) -> ApiResult<Arc<Slot>> {
        if let Some(s) = self.slots.lock().unwrap().get(tile_id) {
            return Ok(s.clone());
        }
        let predictor = self.model.as_ref().map(|m| Predictor {
            model: &m.model,
            mask: m.mask,
        });
        let session = self.store.open(tile_id, predictor.as_ref(), &self.params)?;
        let slot = Arc::new(Slot {
            edit: Mutex::new(()),
            current: RwLock::new(Arc::new(session)),
        });
        // A concurrent open of the same tile may have won; keep the first.
        Ok(self
            .slots
            .lock()
            .unwrap()
            .entry(tile_id.to_string())
            .or_insert(slot)
            .clone())
    }

    fn is_open(&self, tile_id: &str) -> Option<Arc<AnnotationSession>> {
        self.slots.lock().unwrap().get(tile_id).map(|s| s.snapshot())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn snapshot(state: &Arc<AppState>, id: String) -> ApiResult<Arc<AnnotationSession>> {
    let st = state.clone();
    blocking(move || Ok(st.open_slot(&id)?.snapshot())).await
}

/// Runs an edit on a copy of the session and publishes it on success.
async fn edit<T: Send + 'static>(
    state: &Arc<AppState>,
    id: String,
    f: impl FnOnce(&mut AnnotationSession) -> Result<T, SessionError> + Send + 'static,
) -> ApiResult<(T, Arc<AnnotationSession>)> {
    let st = state.clone();
    blocking(move || {
        let slot = st.open_slot(&id)?;
        let _guard = slot.edit.lock().unwrap();
        let mut next = (*slot.snapshot()).clone();
        let out = f(&mut next)?;
        let next = Arc::new(next);
        *slot.current.write().unwrap() = next.clone();
        Ok((out, next))
    })
    .await
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tiles", get(list_tiles))
        .route("/tiles/{id}", get(get_tile))
        .route("/tiles/{id}/mesh.bin", get(get_mesh_bin))
        .route("/tiles/{id}/label", post(post_label))
        .route("/tiles/{id}/split_planar", post(post_split_planar))
        .route("/tiles/{id}/split_stroke", post(post_split_stroke))
        .route("/tiles/{id}/segments", get(get_segments))
        .route("/tiles/{id}/progress", get(get_progress))
        .route("/tiles/{id}/save", post(post_save))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TileSummary {
    pub id: String,
    pub open: bool,
    pub progress: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TileList {
    pub tiles: Vec<TileSummary>,
}

async fn list_tiles(State(state): State<Arc<AppState>>) -> ApiResult<Json<TileList>> {
    let ids = state.store.list()?;
    Ok(Json(TileList {
        tiles: ids
            .into_iter()
            .map(|id| {
                let open = state.is_open(&id);
                TileSummary {
                    progress: open.as_ref().map(|s| s.progress()),
                    open: open.is_some(),
                    id,
                }
            })
            .collect(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentView {
    pub id: u32,
    pub area: f64,
    pub face_count: usize,
    /// Area-majority current label.
    pub class: ClassId,
    /// Top class probability, 1 without a model.
    pub confidence: f64,
    /// Per class 1..=6; absent without a model.
    pub probabilities: Option<[f64; 6]>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TileView {
    pub tile_id: String,
    pub positions: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub face_segment: Vec<u32>,
    pub face_label: Vec<ClassId>,
    pub face_color: Vec<[u8; 3]>,
    pub confirmed: Vec<bool>,
    pub segments: Vec<SegmentView>,
    pub progress: f64,
}

fn segment_views(s: &AnnotationSession) -> Vec<SegmentView> {
    s.segments()
        .segments()
        .iter()
        .map(|seg| SegmentView {
            id: seg.id,
            area: seg.area,
            face_count: seg.face_ids.len(),
            class: s.segment_class(seg.id),
            confidence: s.segment_confidence(seg.id),
            probabilities: s.predictions()[seg.id as usize].map(|p| p.probabilities),
        })
        .collect()
}

async fn get_tile(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<TileView>> {
    let s = snapshot(&state, id).await?;
    let mesh = s.mesh();
    Ok(Json(TileView {
        tile_id: s.tile_id().to_string(),
        positions: mesh.vertices().iter().map(|p| [p.x, p.y, p.z]).collect(),
        faces: mesh.faces().to_vec(),
        face_segment: s.segments().face_assignment().to_vec(),
        face_label: mesh.face_labels().to_vec(),
        face_color: (0..mesh.face_count()).map(|f| mesh.mean_face_color(f)).collect(),
        confirmed: s.confirmed().to_vec(),
        segments: segment_views(&s),
        progress: s.progress(),
    }))
}

async fn get_mesh_bin(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = snapshot(&state, id).await?;
    let payload = meshbin::MeshPayload::from_session(&s);
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::HeaderName::from_static(meshbin::ORIGIN_HEADER), payload.origin_header()),
        ],
        payload.encode(),
    )
        .into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRequest {
    #[serde(default)]
    pub faces: Option<Vec<u32>>,
    #[serde(default)]
    pub segments: Option<Vec<u32>>,
    pub class: ClassId,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EditResponse {
    pub edit: EditRecord,
    pub segment_count: usize,
    pub progress: f64,
}

fn edit_response((edit, s): (EditRecord, Arc<AnnotationSession>)) -> Json<EditResponse> {
    Json(EditResponse {
        edit,
        segment_count: s.segments().len(),
        progress: s.progress(),
    })
}

async fn post_label(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<LabelRequest>,
) -> ApiResult<Json<EditResponse>> {
    let target = match (req.faces, req.segments) {
        (Some(f), None) => Target::Faces(f),
        (None, Some(s)) => Target::Segments(s),
        _ => return Err(ApiError::BadRequest("give exactly one of faces or segments".into())),
    };
    let class = req.class;
    edit(&state, id, move |s| s.assign_label(target, class).cloned())
        .await
        .map(edit_response)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitPlanarRequest {
    pub segment: u32,
    pub max_distance: f64,
    pub max_angle: f64,
    #[serde(default = "one")]
    pub min_region_faces: usize,
}

fn one() -> usize {
    1
}

async fn post_split_planar(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<SplitPlanarRequest>,
) -> ApiResult<Json<EditResponse>> {
    let t = PlanarThresholds {
        max_distance: req.max_distance,
        max_angle: req.max_angle,
        min_region_faces: req.min_region_faces,
    };
    edit(&state, id, move |s| s.split_segment_planar(req.segment, &t).cloned())
        .await
        .map(edit_response)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitStrokeRequest {
    pub stroke: Vec<u32>,
    pub max_distance: f64,
}

async fn post_split_stroke(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<SplitStrokeRequest>,
) -> ApiResult<Json<EditResponse>> {
    edit(&state, id, move |s| s.split_by_stroke(req.stroke, req.max_distance).cloned())
        .await
        .map(edit_response)
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SegmentQuery {
    pub prob_max: Option<f64>,
    pub area_min: Option<f64>,
    pub area_max: Option<f64>,
    pub class: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentList {
    pub segments: Vec<u32>,
}

async fn get_segments(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SegmentQuery>,
) -> ApiResult<Json<SegmentList>> {
    let class = q
        .class
        .map(|c| ClassId::new(c).ok_or_else(|| ApiError::BadRequest(format!("invalid class {c}"))))
        .transpose()?;
    let s = snapshot(&state, id).await?;
    let segments = s.filter_segments(
        q.prob_max.unwrap_or(1.0),
        q.area_min.unwrap_or(0.0),
        q.area_max.unwrap_or(f64::INFINITY),
        class,
    )?;
    Ok(Json(SegmentList { segments }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Progress {
    pub progress: f64,
    pub edits: usize,
}

async fn get_progress(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Progress>> {
    let s = snapshot(&state, id).await?;
    Ok(Json(Progress {
        progress: s.progress(),
        edits: s.log().len(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Saved {
    pub tile_id: String,
    pub edits: usize,
}

async fn post_save(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Saved>> {
    let st = state.clone();
    let saved = blocking(move || {
        let s = st.open_slot(&id)?.snapshot();
        st.store.save(&s)?;
        Ok(Saved {
            tile_id: id,
            edits: s.log().len(),
        })
    })
    .await?;
    Ok(Json(saved))
}
