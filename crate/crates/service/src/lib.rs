//! HTTP/JSON API over a corpus: recordings and their spectrograms, the
//! annotation log, stored models and segmentation runs. It is the only
//! interface the browser annotator uses.

mod api;
pub mod jobs;
pub mod spectrogram;

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::Router;
use lru::LruCache;
use orcaclass_core::audio::{wav_info, AudioError};
use orcaclass_core::dataset::{load_manifest, AnnotationLog, DatasetError, LabelSet};
use orcaclass_core::segmenter::SegmentTimeline;
use orcaclass_core::SvmModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub use jobs::{Job, JobState};
pub use spectrogram::{compute_tile, SpectrogramTile, TileRequest, DB_FLOOR, MAX_FREQ_BINS, MAX_TIME_PX};

/// Recordings up to this long are segmented inside the request; longer ones
/// get a job handle to poll.
pub const DEFAULT_SYNC_LIMIT_S: f64 = 600.0;
pub const DEFAULT_JOB_WORKERS: usize = 2;
pub const DEFAULT_TILE_CACHE: usize = 256;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("recording {id}: {source}")]
    Recording {
        id: String,
        #[source]
        source: AudioError,
    },
    #[error("duplicate recording id {0:?} in manifest")]
    DuplicateRecording(String),
    #[error("models directory {0} does not exist")]
    NoModelsDir(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub manifest: PathBuf,
    pub annotations: PathBuf,
    pub models_dir: PathBuf,
    pub labels: LabelSet,
    /// Built annotator bundle, served for any path no API route claims.
    pub static_dir: Option<PathBuf>,
    pub job_workers: usize,
    pub sync_limit_s: f64,
    pub tile_cache: usize,
}

impl ServiceConfig {
    pub fn new(manifest: &Path, annotations: &Path, models_dir: &Path) -> Self {
        Self {
            manifest: manifest.to_path_buf(),
            annotations: annotations.to_path_buf(),
            models_dir: models_dir.to_path_buf(),
            labels: LabelSet::three_class(),
            static_dir: None,
            job_workers: DEFAULT_JOB_WORKERS,
            sync_limit_s: DEFAULT_SYNC_LIMIT_S,
            tile_cache: DEFAULT_TILE_CACHE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub recording_id: String,
    pub path: PathBuf,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
}

pub(crate) type TileKey = (String, u64, u64, usize, usize);
pub(crate) type RunKey = (String, String);

pub struct AppState {
    pub(crate) recordings: Vec<RecordingEntry>,
    pub(crate) index: HashMap<String, usize>,
    pub(crate) labels: LabelSet,
    pub(crate) models_dir: PathBuf,
    pub(crate) static_dir: Option<PathBuf>,
    pub(crate) sync_limit_s: f64,
    /// The single appender; held only for the duration of one write.
    pub(crate) log: Mutex<AnnotationLog>,
    pub(crate) models: Mutex<HashMap<String, Arc<SvmModel>>>,
    pub(crate) tiles: Mutex<LruCache<TileKey, Arc<SpectrogramTile>>>,
    pub(crate) timelines: Mutex<HashMap<RunKey, Arc<SegmentTimeline>>>,
    pub(crate) running: Mutex<HashSet<RunKey>>,
    pub(crate) jobs: Mutex<HashMap<String, Job>>,
    pub(crate) permits: Arc<Semaphore>,
}

impl AppState {
    /// Reads recording headers from the manifest and replays the
    /// annotation log.
    pub fn load(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        if cfg.job_workers == 0 || cfg.tile_cache == 0 {
            return Err(ServiceError::Config("job workers and tile cache must be positive".into()));
        }
        if !cfg.models_dir.is_dir() {
            return Err(ServiceError::NoModelsDir(cfg.models_dir.clone()));
        }
        let mut recordings = Vec::new();
        let mut index = HashMap::new();
        for e in load_manifest(&cfg.manifest)? {
            let info = wav_info(&e.path).map_err(|source| ServiceError::Recording {
                id: e.recording_id.clone(),
                source,
            })?;
            if index.insert(e.recording_id.clone(), recordings.len()).is_some() {
                return Err(ServiceError::DuplicateRecording(e.recording_id));
            }
            recordings.push(RecordingEntry {
                recording_id: e.recording_id,
                path: e.path,
                duration_s: info.duration_s(),
                sample_rate_hz: info.sample_rate_hz,
            });
        }
        Ok(Self {
            recordings,
            index,
            labels: cfg.labels.clone(),
            models_dir: cfg.models_dir.clone(),
            static_dir: cfg.static_dir.clone(),
            sync_limit_s: cfg.sync_limit_s,
            log: Mutex::new(AnnotationLog::open(&cfg.annotations)?),
            models: Mutex::new(HashMap::new()),
            tiles: Mutex::new(LruCache::new(NonZeroUsize::new(cfg.tile_cache).expect("checked above"))),
            timelines: Mutex::new(HashMap::new()),
            running: Mutex::new(HashSet::new()),
            jobs: Mutex::new(HashMap::new()),
            permits: Arc::new(Semaphore::new(cfg.job_workers)),
        })
    }

    pub(crate) fn recording(&self, id: &str) -> Option<&RecordingEntry> {
        self.index.get(id).map(|&i| &self.recordings[i])
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    api::routes(state)
}

/// Binds `addr` and serves until the process is interrupted.
pub async fn serve(cfg: ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::load(&cfg)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "serving {} recordings on http://{}",
        state.recordings.len(),
        listener.local_addr()?
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// A service running on a background task.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: tokio::sync::oneshot::Sender<()>,
    task: tokio::task::JoinHandle<()>,
}

impl RunningService {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Stops accepting connections and waits for the server task to end.
    pub async fn stop(self) {
        let _ = self.shutdown.send(());
        let _ = self.task.await;
    }
}

/// Starts the service on an ephemeral local port. Used by tests and by the
/// acceptance runner.
pub async fn spawn(cfg: ServiceConfig) -> Result<RunningService, ServiceError> {
    let state = Arc::new(AppState::load(&cfg)?);
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await?;
    let addr = listener.local_addr()?;
    let (shutdown, rx) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let served = axum::serve(listener, router(state)).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(e) = served.await {
            log::error!("service stopped: {e}");
        }
    });
    Ok(RunningService { addr, shutdown, task })
}
