use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, PoisonError};

use axum::body::Body;
use axum::extract::{Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::Utc;
use orcaclass_core::classifier::FeatureConfig;
use orcaclass_core::dataset::Annotation;
use orcaclass_core::segmenter::{segment_wav, SegmentOptions, SegmentTimeline};
use orcaclass_core::SvmModel;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower::ServiceExt;
use tower_http::services::{ServeDir, ServeFile};

use crate::jobs::{Job, JobState};
use crate::spectrogram::{compute_tile, TileRequest, DB_FLOOR, MAX_FREQ_BINS, MAX_TIME_PX};
use crate::{AppState, RecordingEntry, RunKey};

const DEFAULT_TIME_PX: usize = 800;
const DEFAULT_FREQ_BINS: usize = 256;

#[derive(Debug)]
pub(crate) enum ApiError {
    NotFound(String),
    BadRequest(String),
    Unprocessable(String),
    Conflict(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Internal(m) => {
                log::error!("{m}");
                (StatusCode::INTERNAL_SERVER_ERROR, m)
            }
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker task failed: {e}")))
}

pub(crate) fn routes(state: Arc<AppState>) -> Router {
    let static_dir = state.static_dir.clone();
    let router = Router::new()
        .route("/config", get(config))
        .route("/recordings", get(list_recordings))
        .route("/recordings/{id}/spectrogram", get(spectrogram))
        .route("/recordings/{id}/audio", get(audio))
        .route("/recordings/{id}/segment", post(segment))
        .route("/models", get(list_models))
        .route("/annotations", get(list_annotations).post(create_annotation))
        .route("/annotations/{id}", delete(delete_annotation))
        .route("/jobs/{id}", get(get_job))
        .with_state(state);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

fn recording<'a>(state: &'a AppState, id: &str) -> ApiResult<&'a RecordingEntry> {
    state
        .recording(id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown recording {id:?}")))
}

async fn config(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "labels": state.labels.names(),
        "max_time_px": MAX_TIME_PX,
        "max_freq_bins": MAX_FREQ_BINS,
        "floor_db": DB_FLOOR,
        "sync_limit_s": state.sync_limit_s,
    }))
}

async fn list_recordings(State(state): State<Arc<AppState>>) -> Json<Vec<RecordingEntry>> {
    Json(state.recordings.clone())
}

#[derive(Debug, Deserialize)]
struct TileQuery {
    start: Option<f64>,
    end: Option<f64>,
    time_px: Option<usize>,
    freq_bins: Option<usize>,
}

async fn spectrogram(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<TileQuery>,
) -> ApiResult<Response> {
    let rec = recording(&state, &id)?.clone();
    let req = TileRequest {
        start_s: q.start.unwrap_or(0.0),
        end_s: q.end.unwrap_or(rec.duration_s),
        time_px: q.time_px.unwrap_or(DEFAULT_TIME_PX),
        freq_bins: q.freq_bins.unwrap_or(DEFAULT_FREQ_BINS),
    };
    req.validate(rec.duration_s).map_err(ApiError::BadRequest)?;
    let key = (id, req.start_s.to_bits(), req.end_s.to_bits(), req.time_px, req.freq_bins);
    if let Some(tile) = lock(&state.tiles).get(&key) {
        return Ok(Json(tile.as_ref().clone()).into_response());
    }
    let tile = blocking(move || compute_tile(&rec.path, &rec.recording_id, rec.sample_rate_hz, &req))
        .await?
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let tile = Arc::new(tile);
    lock(&state.tiles).put(key, tile.clone());
    Ok(Json(tile.as_ref().clone()).into_response())
}

/// The WAV file itself, with byte-range support for browser playback.
async fn audio(State(state): State<Arc<AppState>>, Path(id): Path<String>, req: Request) -> ApiResult<Response> {
    let path = recording(&state, &id)?.path.clone();
    let res = ServeFile::new(path)
        .oneshot(req)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(res.map(Body::new))
}

#[derive(Debug, Serialize)]
struct ModelInfo {
    model_id: String,
    labels: Vec<String>,
    kernel: String,
    features: Option<FeatureConfig>,
}

fn model_path(state: &AppState, model_id: &str) -> ApiResult<PathBuf> {
    let ok = !model_id.is_empty()
        && !model_id.starts_with('.')
        && model_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    let path = state.models_dir.join(format!("{model_id}.json"));
    if !ok || !path.is_file() {
        return Err(ApiError::NotFound(format!("unknown model {model_id:?}")));
    }
    Ok(path)
}

async fn list_models(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<ModelInfo>>> {
    let dir = state.models_dir.clone();
    let infos = blocking(move || -> std::io::Result<Vec<ModelInfo>> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        Ok(paths
            .into_iter()
            .filter_map(|p| match SvmModel::load(&p) {
                Ok(m) => Some(ModelInfo {
                    model_id: p.file_stem()?.to_string_lossy().into_owned(),
                    labels: m.label_set.names().to_vec(),
                    kernel: m.kernel.to_string(),
                    features: m.features,
                }),
                Err(e) => {
                    log::warn!("skipping {}: {e}", p.display());
                    None
                }
            })
            .collect())
    })
    .await?
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(infos))
}

async fn load_model(state: &Arc<AppState>, model_id: &str) -> ApiResult<Arc<SvmModel>> {
    let path = model_path(state, model_id)?;
    if let Some(m) = lock(&state.models).get(model_id) {
        return Ok(m.clone());
    }
    let model = blocking(move || SvmModel::load(&path))
        .await?
        .map_err(|e| ApiError::Unprocessable(format!("model {model_id:?} is unusable: {e}")))?;
    if model.features.is_none() {
        return Err(ApiError::Unprocessable(format!(
            "model {model_id:?} has no frame settings and cannot segment"
        )));
    }
    let model = Arc::new(model);
    lock(&state.models).insert(model_id.to_string(), model.clone());
    Ok(model)
}

#[derive(Debug, Deserialize)]
struct SegmentRequest {
    model_id: String,
}

/// Releases a (recording, model) claim however the run ends.
struct RunClaim {
    state: Arc<AppState>,
    key: RunKey,
}

impl Drop for RunClaim {
    fn drop(&mut self) {
        lock(&self.state.running).remove(&self.key);
    }
}

async fn run_segmentation(
    state: &Arc<AppState>,
    rec: RecordingEntry,
    model: Arc<SvmModel>,
    key: &RunKey,
) -> Result<Arc<SegmentTimeline>, String> {
    let _permit = state
        .permits
        .clone()
        .acquire_owned()
        .await
        .map_err(|e| e.to_string())?;
    let timeline = tokio::task::spawn_blocking(move || {
        segment_wav(&rec.path, &rec.recording_id, &model, &SegmentOptions::default())
    })
    .await
    .map_err(|e| e.to_string())?
    .map_err(|e| e.to_string())?;
    let timeline = Arc::new(timeline);
    lock(&state.timelines).insert(key.clone(), timeline.clone());
    Ok(timeline)
}

async fn segment(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<SegmentRequest>,
) -> ApiResult<Response> {
    let rec = recording(&state, &id)?.clone();
    let model = load_model(&state, &req.model_id).await?;
    let key = (id, req.model_id);
    if let Some(t) = lock(&state.timelines).get(&key) {
        return Ok(Json(t.as_ref().clone()).into_response());
    }
    if !lock(&state.running).insert(key.clone()) {
        return Err(ApiError::Conflict(format!(
            "segmentation of {:?} with {:?} is already running",
            key.0, key.1
        )));
    }
    let claim = RunClaim {
        state: state.clone(),
        key: key.clone(),
    };

    if rec.duration_s <= state.sync_limit_s {
        let t = run_segmentation(&state, rec, model, &key).await.map_err(ApiError::Internal)?;
        drop(claim);
        return Ok(Json(t.as_ref().clone()).into_response());
    }

    let job = Job::new(&key.0, &key.1);
    let job_id = job.id.clone();
    lock(&state.jobs).insert(job_id.clone(), job.clone());
    tokio::spawn(async move {
        let state = claim.state.clone();
        let set = |f: &dyn Fn(&mut Job)| {
            if let Some(j) = lock(&state.jobs).get_mut(&job_id) {
                f(j);
            }
        };
        set(&|j| j.state = JobState::Running);
        let outcome = run_segmentation(&state, rec, model, &key).await;
        set(&|j| {
            j.finished_at = Some(Utc::now());
            match &outcome {
                Ok(t) => {
                    j.state = JobState::Done;
                    j.result = Some(t.as_ref().clone());
                }
                Err(e) => {
                    j.state = JobState::Failed;
                    j.error = Some(e.clone());
                }
            }
        });
        drop(claim);
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    lock(&state.jobs)
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {id:?}")))
}

#[derive(Debug, Deserialize)]
struct AnnotationQuery {
    recording_id: Option<String>,
}

async fn list_annotations(
    State(state): State<Arc<AppState>>,
    Query(q): Query<AnnotationQuery>,
) -> Json<Vec<Annotation>> {
    Json(lock(&state.log).list(q.recording_id.as_deref()))
}

#[derive(Debug, Deserialize)]
struct NewAnnotation {
    /// Optional client-chosen id; repeating a POST with it is harmless.
    #[serde(default)]
    id: Option<String>,
    recording_id: String,
    start_s: f64,
    end_s: f64,
    label: String,
    #[serde(default)]
    author: String,
}

fn same_content(a: &Annotation, b: &Annotation) -> bool {
    a.recording_id == b.recording_id
        && a.start_s == b.start_s
        && a.end_s == b.end_s
        && a.label == b.label
        && a.author == b.author
}

async fn create_annotation(
    State(state): State<Arc<AppState>>,
    Json(new): Json<NewAnnotation>,
) -> ApiResult<(StatusCode, Json<Annotation>)> {
    let rec = state
        .recording(&new.recording_id)
        .ok_or_else(|| ApiError::Unprocessable(format!("unknown recording {:?}", new.recording_id)))?;
    let annotation = Annotation {
        id: new.id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string()),
        recording_id: new.recording_id,
        start_s: new.start_s,
        end_s: new.end_s,
        label: new.label,
        author: new.author,
        created_at: Utc::now(),
    };
    annotation
        .validate(Some(&state.labels))
        .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    if annotation.end_s > rec.duration_s + 1e-9 {
        return Err(ApiError::Unprocessable(format!(
            "end {} is past the recording's end {}",
            annotation.end_s, rec.duration_s
        )));
    }
    let mut log = lock(&state.log);
    if let Some(existing) = log.get(&annotation.id) {
        return if same_content(existing, &annotation) {
            Ok((StatusCode::OK, Json(existing.clone())))
        } else {
            Err(ApiError::Conflict(format!(
                "annotation {:?} exists with different content",
                annotation.id
            )))
        };
    }
    let created = log.append(annotation).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn delete_annotation(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    match lock(&state.log).delete(&id) {
        Ok(Some(tomb)) => Ok(Json(tomb).into_response()),
        Ok(None) => Err(ApiError::NotFound(format!("unknown annotation {id:?}"))),
        Err(e) => Err(ApiError::Internal(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ServiceConfig;
    use orcaclass_core::audio::{write_wav, AudioBuffer};

    fn state(dir: &std::path::Path) -> Arc<AppState> {
        write_wav(&dir.join("a.wav"), &AudioBuffer::new(vec![0.0; 8000], 8000).unwrap()).unwrap();
        std::fs::write(
            dir.join("manifest.json"),
            r#"[{"recording_id":"a","path":"a.wav","duration_s":1.0}]"#,
        )
        .unwrap();
        std::fs::create_dir_all(dir.join("models")).unwrap();
        std::fs::write(dir.join("models").join("m.json"), "{}").unwrap();
        let cfg = ServiceConfig::new(&dir.join("manifest.json"), &dir.join("ann.jsonl"), &dir.join("models"));
        Arc::new(AppState::load(&cfg).unwrap())
    }

    async fn call(state: &Arc<AppState>, req: Request) -> (StatusCode, serde_json::Value) {
        let res = routes(state.clone()).oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
        (status, serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null))
    }

    fn post_segment(model: &str) -> Request {
        Request::post("/recordings/a/segment")
            .header("content-type", "application/json")
            .body(Body::from(format!(r#"{{"model_id":"{model}"}}"#)))
            .unwrap()
    }

    #[tokio::test]
    async fn second_identical_run_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let s = state(dir.path());
        // a usable model is cached so the request gets as far as the claim
        let labels = orcaclass_core::LabelSet::three_class();
        let instances = (0..6)
            .map(|i| orcaclass_core::dataset::Instance {
                features: (0..34).map(|d| (i * 34 + d) as f64 % 7.0 + i as f64).collect(),
                label: i % 3,
            })
            .collect();
        let d = orcaclass_core::Dataset::new("t", orcaclass_core::features::texture_feature_names(), labels, instances)
            .unwrap();
        let model = SvmModel::train(&d, &Default::default()).unwrap().with_features(FeatureConfig {
            frame_spec: Default::default(),
            memory: 20,
        });
        lock(&s.models).insert("m".into(), Arc::new(model));
        lock(&s.running).insert(("a".into(), "m".into()));
        let (status, body) = call(&s, post_segment("m")).await;
        assert_eq!(status, StatusCode::CONFLICT, "{body}");
    }

    #[tokio::test]
    async fn unsafe_or_missing_model_ids_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let s = state(dir.path());
        for id in ["../manifest", "nope", ".hidden", ""] {
            let (status, _) = call(&s, post_segment(id)).await;
            assert_eq!(status, StatusCode::NOT_FOUND, "{id:?}");
        }
        // present but not a model
        let (status, _) = call(&s, post_segment("m")).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    }

    #[tokio::test]
    async fn unknown_job_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let s = state(dir.path());
        let (status, _) = call(&s, Request::get("/jobs/x").body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    }
}
