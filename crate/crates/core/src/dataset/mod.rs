//! Labeled clips, preprocessing, training-set assembly, ARFF export and
//! cross-validation folds.

mod annotation;
mod arff;
mod build;
mod folds;
mod manifest;
mod preprocess;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioError;
use crate::features::FeatureError;

pub use annotation::{read_annotations, write_annotations, Annotation, AnnotationLog, LogRecord, Tombstone};
pub use arff::{export_arff, parse_arff, read_arff, write_arff_string};
pub use build::{build_dataset, AudioSource, BuildReport, MemorySource, SkippedClip};
pub use folds::stratified_kfold;
pub use manifest::{load_manifest, save_manifest, ManifestEntry, ManifestSource};
pub use preprocess::{
    middle_extract, trim_silence, MiddleExtract, Preprocessing, BACKGROUND_MIDDLE_S, DEFAULT_SILENCE_RATIO,
    ORCA_MIDDLE_S,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("label set needs at least two labels")]
    TooFewLabels,
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("label {0:?} is not in the label set")]
    UnknownLabel(String),
    #[error("invalid interval [{start_s}, {end_s})")]
    InvalidInterval { start_s: f64, end_s: f64 },
    #[error("annotation id {0:?} already exists with different content")]
    DuplicateId(String),
    #[error("clip is silent throughout")]
    AllSilence,
    #[error("unknown recording {0:?}")]
    UnknownRecording(String),
    #[error("dataset is empty")]
    Empty,
    #[error("instance {index} has {actual} features, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, actual: usize },
    #[error("label index {0} out of range")]
    BadLabelIndex(usize),
    #[error("class {label:?} has {count} instances, fewer than k = {k}")]
    ClassTooSmall { label: String, count: usize, k: usize },
    #[error("k must be at least 2 (got {0})")]
    BadK(usize),
    #[error("parse error in {path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Ordered, duplicate-free class names. A label's position is its index in
/// every model and confusion matrix built from the set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(Vec<String>);

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(DatasetError::TooFewLabels);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(DatasetError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self(labels))
    }

    /// `orca`, `background`, `voice`.
    pub fn three_class() -> Self {
        Self::new(["orca", "background", "voice"]).expect("valid")
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.iter().position(|l| l == label)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.0.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = DatasetError;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Feature vectors with class indices into `label_set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub relation: String,
    pub feature_names: Vec<String>,
    pub label_set: LabelSet,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(
        relation: impl Into<String>,
        feature_names: Vec<String>,
        label_set: LabelSet,
        instances: Vec<Instance>,
    ) -> Result<Self> {
        let d = Self {
            relation: relation.into(),
            feature_names,
            label_set,
            instances,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.feature_names.len();
        for (index, inst) in self.instances.iter().enumerate() {
            if inst.features.len() != dim {
                return Err(DatasetError::DimensionMismatch {
                    index,
                    expected: dim,
                    actual: inst.features.len(),
                });
            }
            if inst.label >= self.label_set.len() {
                return Err(DatasetError::BadLabelIndex(inst.label));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_set.len()];
        for i in &self.instances {
            counts[i.label] += 1;
        }
        counts
    }

    /// Sub-dataset of the given instance indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            relation: self.relation.clone(),
            feature_names: self.feature_names.clone(),
            label_set: self.label_set.clone(),
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
        }
    }
}
