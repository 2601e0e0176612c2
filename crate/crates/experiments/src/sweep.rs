//! Window/memory parameter sweep and preprocessing comparison, both scored
//! by stratified cross-validation.

use std::fmt::Write as _;

use orcaclass_core::audio::AudioBuffer;
use orcaclass_core::classifier::{cross_validate, FeatureConfig, SvmModel, TrainParams};
use orcaclass_core::dataset::{build_dataset, Annotation, AudioSource, Dataset, DatasetError, Instance, LabelSet, Preprocessing};
use orcaclass_core::features::{extract_texture_stream, texture_feature_names, FrameSpec, WindowFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{ExperimentError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub windows: Vec<usize>,
    pub memories: Vec<usize>,
    pub window_function: WindowFunction,
    /// Cross-validation folds.
    pub k: usize,
    pub seed: u64,
    /// Texture vectors kept per class, evenly spaced along each class
    /// stream.
    pub per_class: usize,
}

impl SweepGrid {
    /// Four window sizes by three memory lengths, hop = window / 2.
    pub fn full() -> Self {
        Self {
            windows: vec![512, 1024, 2048, 4096],
            memories: vec![20, 40, 80],
            window_function: WindowFunction::Hamming,
            k: 10,
            seed: 1,
            per_class: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() || self.memories.is_empty() {
            return Err(ExperimentError::InvalidSpec("sweep grid needs windows and memories".into()));
        }
        if self.memories.contains(&0) || self.k < 2 || self.per_class < self.k {
            return Err(ExperimentError::InvalidSpec(format!(
                "memories must be positive, k >= 2 and per_class >= k: {self:?}"
            )));
        }
        for &w in &self.windows {
            FrameSpec::new(w, w / 2, self.window_function)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window: usize,
    pub hop: usize,
    pub memory: usize,
    pub instances: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn accuracy(&self, window: usize, memory: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.window == window && r.memory == memory)
            .map(|r| r.accuracy)
    }

    /// Mean accuracy over all windows at one memory length.
    pub fn memory_mean(&self, memory: usize) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.memory == memory).map(|r| r.accuracy).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Rows grouped by memory, like the published table.
    pub fn to_text(&self) -> String {
        let mut out = String::from("memory  window   hop  instances  % correct\n");
        let mut last = None;
        for r in &self.rows {
            if last.is_some() && last != Some(r.memory) {
                out.push('\n');
            }
            last = Some(r.memory);
            let _ = writeln!(
                out,
                "{:>6}  {:>6}  {:>4}  {:>9}  {:>9.2}",
                r.memory,
                r.window,
                r.hop,
                r.instances,
                100.0 * r.accuracy
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window,hop,memory,instances,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.window, r.hop, r.memory, r.instances, r.accuracy);
        }
        out
    }
}

/// Evenly spaced picks of `k` out of `n` indices (all of them if n <= k).
fn spaced(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        (0..n).collect()
    } else {
        (0..k).map(|i| i * n / k).collect()
    }
}

/// Per-frame training vectors: every clip of a class is concatenated into
/// one stream, texture statistics over the trailing `memory` frames are
/// taken at every hop, and `per_class` of them are kept at even spacing.
pub fn stream_dataset(
    annotations: &[Annotation],
    source: &dyn AudioSource,
    spec: &FrameSpec,
    memory: usize,
    labels: &LabelSet,
    per_class: usize,
) -> Result<Dataset> {
    let mut instances = Vec::new();
    let mut sample_rate = None;
    for (label_idx, label) in labels.names().iter().enumerate() {
        let mut samples = Vec::new();
        for a in annotations.iter().filter(|a| &a.label == label) {
            let rec = source.load(&a.recording_id)?;
            if *sample_rate.get_or_insert(rec.sample_rate_hz()) != rec.sample_rate_hz() {
                return Err(ExperimentError::InvalidSpec("recordings differ in sample rate".into()));
            }
            samples.extend_from_slice(rec.slice(a.start_s, a.duration_s())?.samples());
        }
        if samples.len() < spec.window_size {
            log::warn!("class {label:?} has too little audio for one window; skipped");
            continue;
        }
        let stream = AudioBuffer::new(samples, sample_rate.expect("set with samples"))?;
        let textures = extract_texture_stream(&stream, spec, memory)?;
        for i in spaced(textures.len(), per_class) {
            instances.push(Instance {
                features: textures[i].to_vec(),
                label: label_idx,
            });
        }
    }
    if instances.is_empty() {
        return Err(DatasetError::Empty.into());
    }
    Ok(Dataset::new("frames", texture_feature_names(), labels.clone(), instances)?)
}

/// Texture memory for segmentation models: about 0.93 s at hop 2048 and
/// 44.1 kHz. Whole-clip classification uses 80, but 80 frames span 3.7 s,
/// longer than most calls, which blurs boundaries.
pub const SEGMENTATION_MEMORY: usize = 20;

/// Model for segmenting long recordings. It is trained on the same sliding
/// texture vectors the segmenter produces, so partial memory windows at the
/// start of a class stream are represented too. Returns the model and the
/// seconds of annotated audio behind it.
pub fn train_segmentation_model(
    annotations: &[Annotation],
    source: &dyn AudioSource,
    spec: &FrameSpec,
    memory: usize,
    labels: &LabelSet,
    per_class: usize,
    params: &TrainParams,
) -> Result<(SvmModel, f64)> {
    let d = stream_dataset(annotations, source, spec, memory, labels, per_class)?;
    let model = SvmModel::train(&d, params)?.with_features(FeatureConfig {
        frame_spec: *spec,
        memory,
    });
    let seconds = annotations
        .iter()
        .filter(|a| labels.index_of(&a.label).is_some())
        .map(Annotation::duration_s)
        .sum();
    Ok((model, seconds))
}

/// Cross-validated accuracy for every (window, memory) cell.
pub fn run_sweep(
    grid: &SweepGrid,
    annotations: &[Annotation],
    source: &dyn AudioSource,
    labels: &LabelSet,
    params: &TrainParams,
) -> Result<SweepTable> {
    grid.validate()?;
    let cells: Vec<(usize, usize)> = grid
        .memories
        .iter()
        .flat_map(|&m| grid.windows.iter().map(move |&w| (w, m)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(window, memory)| {
            let spec = FrameSpec::new(window, window / 2, grid.window_function)?;
            let d = stream_dataset(annotations, source, &spec, memory, labels, grid.per_class)?;
            let cv = cross_validate(&d, grid.k, grid.seed, params)?;
            log::info!("window {window} memory {memory}: {:.2}%", 100.0 * cv.accuracy);
            Ok(SweepRow {
                window,
                hop: window / 2,
                memory,
                instances: d.len(),
                accuracy: cv.accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessingRow {
    pub name: String,
    pub instances: usize,
    pub skipped: usize,
    pub accuracy: f64,
}

/// Whole-clip cross-validation under each preprocessing variant.
pub fn compare_preprocessing(
    variants: &[(String, Preprocessing)],
    annotations: &[Annotation],
    source: &dyn AudioSource,
    spec: &FrameSpec,
    labels: &LabelSet,
    k: usize,
    seed: u64,
    params: &TrainParams,
) -> Result<Vec<PreprocessingRow>> {
    variants
        .iter()
        .map(|(name, pre)| {
            let (d, report) = build_dataset(annotations, source, spec, pre, labels)?;
            let cv = cross_validate(&d, k, seed, params)?;
            Ok(PreprocessingRow {
                name: name.clone(),
                instances: d.len(),
                skipped: report.skipped.len(),
                accuracy: cv.accuracy,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing() {
        assert_eq!(spaced(3, 5), vec![0, 1, 2]);
        assert_eq!(spaced(10, 5), vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn grid_validation() {
        assert!(SweepGrid::full().validate().is_ok());
        let mut g = SweepGrid::full();
        g.windows = vec![500];
        assert!(g.validate().is_err());
        let mut g = SweepGrid::full();
        g.memories.clear();
        assert!(g.validate().is_err());
    }

    #[test]
    fn table_views() {
        let row = |window, memory, accuracy| SweepRow {
            window,
            hop: window / 2,
            memory,
            instances: 10,
            accuracy,
        };
        let t = SweepTable {
            rows: vec![row(512, 20, 0.5), row(4096, 20, 0.7), row(512, 80, 0.8), row(4096, 80, 0.9)],
        };
        assert_eq!(t.accuracy(4096, 80), Some(0.9));
        assert!((t.memory_mean(20).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(t.to_csv().lines().count(), 5);
        assert_eq!(t.to_text().lines().filter(|l| l.is_empty()).count(), 1);
    }
}
