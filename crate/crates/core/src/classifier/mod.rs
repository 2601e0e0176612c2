//! Support vector machine classification: binary SMO training, one-vs-one
//! multiclass models, cross-validation and confusion matrices.

mod confusion;
mod crossval;
mod model;
pub mod smo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetError;

pub use confusion::ConfusionMatrix;
pub use crossval::{cross_validate, CrossValidation};
pub use model::{FeatureConfig, Prediction, SvmModel, TrainParams, MODEL_SCHEMA_VERSION};
pub use smo::{train_binary_smo, BinarySvm, SmoParams};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("class {0:?} has no training instances")]
    MissingClass(String),
    #[error("{0} instances but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("feature vector has {actual} dimensions, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cannot parse kernel {0:?} (expected linear or rbf:<gamma>)")]
    BadKernel(String),
    #[error("unsupported model schema version {0}")]
    SchemaVersion(u32),
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(ClassifierError::InvalidParams(format!("rbf gamma {gamma} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Linear => f.write_str("linear"),
            Kernel::Rbf { gamma } => write!(f, "rbf:{gamma}"),
        }
    }
}

impl FromStr for Kernel {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "linear" {
            return Ok(Kernel::Linear);
        }
        let gamma = lower
            .strip_prefix("rbf:")
            .and_then(|g| g.parse::<f64>().ok())
            .ok_or_else(|| ClassifierError::BadKernel(s.to_string()))?;
        let k = Kernel::Rbf { gamma };
        k.validate()?;
        Ok(k)
    }
}

/// Per-feature z-score parameters fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormStats {
    /// Population statistics per column. Constant columns get std 1 so they
    /// map to zero instead of NaN.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; dim];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in stds.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12 && s.is_finite()) {
                *s = 1.0;
            }
        }
        Self { means, stds }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}
