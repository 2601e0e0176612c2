use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Annotation, Dataset, DatasetError, Instance, LabelSet, Preprocessing, Result};
use crate::audio::AudioBuffer;
use crate::features::{extract_clip_features, texture_feature_names, FrameSpec};

/// Resolves recording ids to decoded audio.
pub trait AudioSource: Sync {
    fn contains(&self, recording_id: &str) -> bool;
    fn load(&self, recording_id: &str) -> Result<Arc<AudioBuffer>>;
}

/// Recordings held in memory, keyed by id.
#[derive(Default, Clone)]
pub struct MemorySource {
    recordings: HashMap<String, Arc<AudioBuffer>>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, recording_id: impl Into<String>, buffer: AudioBuffer) {
        self.recordings.insert(recording_id.into(), Arc::new(buffer));
    }
}

impl AudioSource for MemorySource {
    fn contains(&self, recording_id: &str) -> bool {
        self.recordings.contains_key(recording_id)
    }

    fn load(&self, recording_id: &str) -> Result<Arc<AudioBuffer>> {
        self.recordings
            .get(recording_id)
            .cloned()
            .ok_or_else(|| DatasetError::UnknownRecording(recording_id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedClip {
    pub annotation_id: String,
    pub reason: String,
}

/// Which annotations became instances and which were dropped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub used: usize,
    pub skipped: Vec<SkippedClip>,
}

fn clip_instance(
    a: &Annotation,
    source: &dyn AudioSource,
    spec: &FrameSpec,
    preprocessing: &Preprocessing,
    labels: &LabelSet,
) -> Result<Instance> {
    let label = labels
        .index_of(&a.label)
        .ok_or_else(|| DatasetError::UnknownLabel(a.label.clone()))?;
    a.validate(None)?;
    let recording = source.load(&a.recording_id)?;
    let clip = recording.slice(a.start_s, a.duration_s())?;
    let clip = preprocessing.apply(&clip, &a.label)?;
    let texture = extract_clip_features(&clip, spec)?;
    Ok(Instance {
        features: texture.to_vec(),
        label,
    })
}

/// One whole-clip texture vector per annotation. Clips that fail
/// preprocessing or are too short are skipped and reported; only an
/// unknown recording id or an empty result is an error.
pub fn build_dataset(
    annotations: &[Annotation],
    source: &dyn AudioSource,
    spec: &FrameSpec,
    preprocessing: &Preprocessing,
    labels: &LabelSet,
) -> Result<(Dataset, BuildReport)> {
    if annotations.is_empty() {
        return Err(DatasetError::Empty);
    }
    spec.validate()?;
    if let Some(a) = annotations.iter().find(|a| !source.contains(&a.recording_id)) {
        return Err(DatasetError::UnknownRecording(a.recording_id.clone()));
    }

    let results: Vec<Result<Instance>> = annotations
        .par_iter()
        .map(|a| clip_instance(a, source, spec, preprocessing, labels))
        .collect();

    let mut instances = Vec::with_capacity(results.len());
    let mut report = BuildReport::default();
    for (a, r) in annotations.iter().zip(results) {
        match r {
            Ok(inst) => instances.push(inst),
            Err(DatasetError::UnknownRecording(id)) => return Err(DatasetError::UnknownRecording(id)),
            Err(e) => {
                log::debug!("skipping annotation {}: {e}", a.id);
                report.skipped.push(SkippedClip {
                    annotation_id: a.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    report.used = instances.len();
    if instances.is_empty() {
        return Err(DatasetError::Empty);
    }
    let dataset = Dataset::new("clips", texture_feature_names(), labels.clone(), instances)?;
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn ann(id: &str, rec: &str, start: f64, end: f64, label: &str) -> Annotation {
        Annotation {
            id: id.into(),
            recording_id: rec.into(),
            start_s: start,
            end_s: end,
            label: label.into(),
            author: "t".into(),
            created_at: Utc::now(),
        }
    }

    fn source() -> MemorySource {
        let sr = 8000u32;
        let mut samples: Vec<f64> = (0..sr as usize * 3)
            .map(|i| 0.4 * (i as f64 * 0.3).sin())
            .collect();
        samples[sr as usize..2 * sr as usize].iter_mut().for_each(|s| *s = 0.0);
        let mut src = MemorySource::new();
        src.insert("rec", AudioBuffer::new(samples, sr).unwrap());
        src
    }

    fn spec() -> FrameSpec {
        FrameSpec::new(512, 256, crate::features::WindowFunction::Hamming).unwrap()
    }

    #[test]
    fn silent_clip_is_skipped_under_trimming() {
        let labels = LabelSet::three_class();
        let anns = vec![
            ann("a", "rec", 0.0, 1.0, "orca"),
            ann("b", "rec", 1.0, 2.0, "background"),
            ann("c", "rec", 2.0, 3.0, "voice"),
        ];
        let pre = Preprocessing::TrimSilence { threshold_ratio: 0.1 };
        let (d, report) = build_dataset(&anns, &source(), &spec(), &pre, &labels).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 34);
        assert_eq!(report.used, 2);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].annotation_id, "b");
        assert_eq!(d.labels(), vec![0, 2]);
    }

    #[test]
    fn errors() {
        let labels = LabelSet::three_class();
        assert!(matches!(
            build_dataset(&[], &source(), &spec(), &Preprocessing::None, &labels),
            Err(DatasetError::Empty)
        ));
        assert!(matches!(
            build_dataset(&[ann("a", "missing", 0.0, 1.0, "orca")], &source(), &spec(), &Preprocessing::None, &labels),
            Err(DatasetError::UnknownRecording(_))
        ));
        // every clip shorter than a window: nothing survives
        assert!(matches!(
            build_dataset(&[ann("a", "rec", 0.0, 0.01, "orca")], &source(), &spec(), &Preprocessing::None, &labels),
            Err(DatasetError::Empty)
        ));
    }
}
