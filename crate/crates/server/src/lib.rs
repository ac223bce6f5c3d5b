//! Versioned JSON API over a directory of run artifacts, for reviewing
//! proposals and exporting accepted masks.
//!
//! Every route lives under [`API_PREFIX`]. File work runs on the blocking
//! pool; decision writes are serialized by the core crate.

use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use camprompt::cam::cam_file_stem;
use camprompt::pipeline::{
    self, DecisionInput, ExportSummary, FieldError, QueueItem, ReviewDecision, RunSummary, CAMS_DIR, IMAGES_DIR,
};
use camprompt::segmenter::{ManifestMask, PromptPoint};
use camprompt::ClassId;

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("invalid request")]
    Invalid(Vec<FieldError>),
    #[error(transparent)]
    Core(#[from] camprompt::Error),
    #[error("worker task failed: {0}")]
    Join(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, fields) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, Vec::new()),
            ApiError::Invalid(f) => (StatusCode::UNPROCESSABLE_ENTITY, f.clone()),
            ApiError::Core(_) | ApiError::Join(_) => {
                log::error!("{self}");
                (StatusCode::INTERNAL_SERVER_ERROR, Vec::new())
            }
        };
        let body = ErrorBody {
            error: self.to_string(),
            fields,
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone)]
pub struct AppState {
    /// Directory holding one sub-directory per run.
    pub runs_root: PathBuf,
    /// Exports land in `{export_root}/{run_id}`.
    pub export_root: PathBuf,
}

impl AppState {
    fn run(&self, run_id: &str) -> ApiResult<PathBuf> {
        pipeline::run_dir(&self.runs_root, run_id).map_err(|_| ApiError::NotFound(format!("no run `{run_id}`")))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Join(e.to_string()))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueResponse {
    pub run_id: String,
    pub items: Vec<QueueItem>,
}

/// Everything the review UI needs to render one (image, class) item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResponse {
    pub run_id: String,
    pub image_id: String,
    pub class_id: ClassId,
    pub class_name: String,
    pub width: u32,
    pub height: u32,
    pub image_url: String,
    pub cam_url: Option<String>,
    pub prompt: PromptPoint,
    pub masks: Vec<ManifestMask>,
    pub decision: Option<ReviewDecision>,
    pub history_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub decision: ReviewDecision,
    pub history_len: usize,
}

#[derive(Debug, Deserialize)]
struct ItemQuery {
    run: String,
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{run_id}/queue", get(run_queue))
        .route("/runs/{run_id}/export", post(run_export))
        .route("/runs/{run_id}/images/{image_id}", get(image_png))
        .route("/runs/{run_id}/cams/{image_id}/{class_id}", get(cam_png))
        .route("/items/{image_id}/{class_id}", get(item))
        .route("/decisions", post(decide));
    Router::new().nest(API_PREFIX, api).with_state(Arc::new(state))
}

/// Bind `addr` and serve until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} on http://{}{API_PREFIX}", state.runs_root.display(), listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn list_runs(State(st): State<Arc<AppState>>) -> ApiResult<Json<Vec<RunSummary>>> {
    blocking(move || Ok(Json(pipeline::list_runs(&st.runs_root)?))).await
}

async fn run_queue(State(st): State<Arc<AppState>>, Path(run_id): Path<String>) -> ApiResult<Json<QueueResponse>> {
    blocking(move || {
        let dir = st.run(&run_id)?;
        Ok(Json(QueueResponse {
            items: pipeline::queue(&dir)?,
            run_id,
        }))
    })
    .await
}

async fn item(
    State(st): State<Arc<AppState>>,
    Path((image_id, class_id)): Path<(String, ClassId)>,
    Query(q): Query<ItemQuery>,
) -> ApiResult<Json<ItemResponse>> {
    blocking(move || {
        let dir = st.run(&q.run)?;
        let manifest = dir
            .join(pipeline::PROPOSALS_DIR)
            .join(camprompt::segmenter::ProposalManifest::file_name(&image_id, class_id));
        if !pipeline::is_safe_component(&image_id) || !manifest.is_file() {
            return Err(ApiError::NotFound(format!("no item {image_id}/{class_id} in run `{}`", q.run)));
        }
        let it = pipeline::load_item(&dir, &image_id, class_id)?;
        let base = format!("{API_PREFIX}/runs/{}", q.run);
        Ok(Json(ItemResponse {
            image_url: format!("{base}/images/{image_id}"),
            cam_url: it.cam_available.then(|| format!("{base}/cams/{image_id}/{class_id}")),
            run_id: q.run,
            image_id,
            class_id,
            class_name: it.class_name,
            width: it.proposals.width,
            height: it.proposals.height,
            prompt: it.proposals.prompt,
            masks: it.proposals.masks,
            decision: it.decision,
            history_len: it.history_len,
        }))
    })
    .await
}

async fn decide(
    State(st): State<Arc<AppState>>,
    payload: std::result::Result<Json<DecisionInput>, JsonRejection>,
) -> ApiResult<Json<DecisionResponse>> {
    let Json(input) = payload.map_err(|e| ApiError::Invalid(vec![FieldError::new("body", e.body_text())]))?;
    blocking(move || {
        let dir = st.run(&input.run_id)?;
        let decision = pipeline::record_decision(&dir, &input)?.map_err(ApiError::Invalid)?;
        let history_len = pipeline::history(&dir, &decision.image_id, decision.class_id)?.len();
        Ok(Json(DecisionResponse { decision, history_len }))
    })
    .await
}

async fn run_export(State(st): State<Arc<AppState>>, Path(run_id): Path<String>) -> ApiResult<Json<ExportSummary>> {
    blocking(move || {
        let dir = st.run(&run_id)?;
        Ok(Json(pipeline::export(&dir, &st.export_root.join(&run_id))?))
    })
    .await
}

fn png_file(path: &FsPath, what: &str) -> ApiResult<Response> {
    let bytes = std::fs::read(path).map_err(|_| ApiError::NotFound(format!("no {what}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], Body::from(bytes)).into_response())
}

async fn image_png(State(st): State<Arc<AppState>>, Path((run_id, image_id)): Path<(String, String)>) -> ApiResult<Response> {
    blocking(move || {
        let dir = st.run(&run_id)?;
        if !pipeline::is_safe_component(&image_id) {
            return Err(ApiError::NotFound(format!("no image `{image_id}`")));
        }
        png_file(&dir.join(IMAGES_DIR).join(format!("{image_id}.png")), &format!("image `{image_id}`"))
    })
    .await
}

async fn cam_png(
    State(st): State<Arc<AppState>>,
    Path((run_id, image_id, class_id)): Path<(String, String, ClassId)>,
) -> ApiResult<Response> {
    blocking(move || {
        let dir = st.run(&run_id)?;
        if !pipeline::is_safe_component(&image_id) {
            return Err(ApiError::NotFound(format!("no image `{image_id}`")));
        }
        let path = dir.join(CAMS_DIR).join(format!("{}.png", cam_file_stem(&image_id, class_id)));
        png_file(&path, &format!("activation map for {image_id}/{class_id}"))
    })
    .await
}
