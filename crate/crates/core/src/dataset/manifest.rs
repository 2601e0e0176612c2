use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{AudioSource, DatasetError, Result};
use crate::audio::{load_wav, AudioBuffer};

/// One recording in a corpus manifest. Relative paths are resolved against
/// the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub recording_id: String,
    pub path: PathBuf,
    pub duration_s: f64,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(entries)
}

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let text = serde_json::to_string_pretty(entries).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads recordings named in a manifest, caching decoded buffers.
pub struct ManifestSource {
    entries: HashMap<String, PathBuf>,
    cache: Mutex<HashMap<String, Arc<AudioBuffer>>>,
}

impl ManifestSource {
    pub fn new(entries: &[ManifestEntry]) -> Self {
        Self {
            entries: entries
                .iter()
                .map(|e| (e.recording_id.clone(), e.path.clone()))
                .collect(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(&load_manifest(path)?))
    }
}

impl AudioSource for ManifestSource {
    fn contains(&self, recording_id: &str) -> bool {
        self.entries.contains_key(recording_id)
    }

    fn load(&self, recording_id: &str) -> Result<Arc<AudioBuffer>> {
        if let Some(b) = self.cache.lock().unwrap().get(recording_id) {
            return Ok(b.clone());
        }
        let path = self
            .entries
            .get(recording_id)
            .ok_or_else(|| DatasetError::UnknownRecording(recording_id.to_string()))?;
        let buffer = Arc::new(load_wav(path)?);
        self.cache
            .lock()
            .unwrap()
            .insert(recording_id.to_string(), buffer.clone());
        Ok(buffer)
    }
}
