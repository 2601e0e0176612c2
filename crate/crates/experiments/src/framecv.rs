//! Clip-level and frame-level cross-validation over the same folds.
//!
//! Published call-type confusion counts can exceed the number of clips, which
//! only makes sense if every analysis frame was counted. Both views are
//! reported here rather than guessing which one a given table used.

use orcaclass_core::classifier::{cross_validate, ConfusionMatrix, CrossValidation, SvmModel, TrainParams};
use orcaclass_core::dataset::{stratified_kfold, Annotation, AudioSource, Dataset, DatasetError, Instance, LabelSet};
use orcaclass_core::features::{extract_clip_features, extract_texture_stream, texture_feature_names, FrameSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFrameCv {
    /// One prediction per clip, from whole-clip texture vectors.
    pub clip: CrossValidation,
    /// One prediction per analysis frame of every held-out clip.
    pub frame: ConfusionMatrix,
    pub skipped: usize,
}

struct Clip {
    label: usize,
    whole: Vec<f64>,
    frames: Vec<Vec<f64>>,
}

fn load_clip(a: &Annotation, source: &dyn AudioSource, spec: &FrameSpec, memory: usize, labels: &LabelSet) -> Option<Clip> {
    let label = labels.index_of(&a.label)?;
    let rec = source.load(&a.recording_id).ok()?;
    let clip = rec.slice(a.start_s, a.duration_s()).ok()?;
    let whole = extract_clip_features(&clip, spec).ok()?.to_vec();
    let frames = extract_texture_stream(&clip, spec, memory)
        .ok()?
        .iter()
        .map(|t| t.to_vec())
        .collect();
    Some(Clip { label, whole, frames })
}

/// Frame models train on at most `frames_per_clip` evenly spaced texture
/// vectors of each training clip; testing uses every frame.
pub fn clip_and_frame_cv(
    annotations: &[Annotation],
    source: &dyn AudioSource,
    spec: &FrameSpec,
    memory: usize,
    labels: &LabelSet,
    k: usize,
    seed: u64,
    frames_per_clip: usize,
    params: &TrainParams,
) -> Result<ClipFrameCv> {
    let loaded: Vec<Option<Clip>> = annotations
        .par_iter()
        .map(|a| load_clip(a, source, spec, memory, labels))
        .collect();
    let skipped = loaded.iter().filter(|c| c.is_none()).count();
    let clips: Vec<Clip> = loaded.into_iter().flatten().collect();
    if clips.is_empty() {
        return Err(DatasetError::Empty.into());
    }
    let names = texture_feature_names();
    let clip_set = Dataset::new(
        "clips",
        names.clone(),
        labels.clone(),
        clips
            .iter()
            .map(|c| Instance {
                features: c.whole.clone(),
                label: c.label,
            })
            .collect(),
    )?;
    let clip = cross_validate(&clip_set, k, seed, params)?;

    let folds = stratified_kfold(&clip_set, k, seed)?;
    let per_fold = (0..folds.len())
        .into_par_iter()
        .map(|f| -> Result<Vec<(usize, usize)>> {
            let mut train = Vec::new();
            for (_, fold) in folds.iter().enumerate().filter(|&(g, _)| g != f) {
                for &i in fold {
                    let c = &clips[i];
                    let n = c.frames.len();
                    let take = frames_per_clip.min(n);
                    train.extend((0..take).map(|j| Instance {
                        features: c.frames[j * n / take].clone(),
                        label: c.label,
                    }));
                }
            }
            let model = SvmModel::train(&Dataset::new("frames", names.clone(), labels.clone(), train)?, params)?;
            let mut out = Vec::new();
            for &i in &folds[f] {
                for v in &clips[i].frames {
                    out.push((clips[i].label, model.predict(v)?.label));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut frame = ConfusionMatrix::new(labels.names().to_vec());
    for (truth, predicted) in per_fold.into_iter().flatten() {
        frame.record(truth, predicted);
    }
    Ok(ClipFrameCv { clip, frame, skipped })
}
