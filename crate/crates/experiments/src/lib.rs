//! Desk-scale versions of the evaluation procedures: synthetic corpora in
//! place of archive audio, the window/memory parameter sweep, the
//! preprocessing comparison, and batch segmentation with timing.

pub mod batch;
pub mod framecv;
pub mod sweep;
pub mod synth;

use std::path::PathBuf;

use orcaclass_core::audio::AudioError;
use orcaclass_core::classifier::ClassifierError;
use orcaclass_core::dataset::DatasetError;
use orcaclass_core::features::FeatureError;
use orcaclass_core::segmenter::SegmenterError;
use thiserror::Error;

pub use batch::{
    format_dhms, partition_round_robin, plan_batch, run_batch, scaling_check, selected_count, BatchConfig,
    BatchOutcome, BatchPlan, RecordingOutcome, ScalingCheck, ScalingPair, TimingReport, TimingRow,
};
pub use framecv::{clip_and_frame_cv, ClipFrameCv};
pub use sweep::{
    compare_preprocessing, run_sweep, stream_dataset, train_segmentation_model, SEGMENTATION_MEMORY, PreprocessingRow, SweepGrid, SweepRow,
    SweepTable,
};
pub use synth::{
    generate_long_recordings, generate_synthetic_corpus, CallTemplate, CorpusKind, GeneratedCorpus,
    LongRecordingSpec, SyntheticCorpusSpec,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("need at least two timing rows with different fractions for the same worker count")]
    InsufficientRows,
    #[error("no recordings to process")]
    NoFiles,
    #[error("all {0} recordings failed")]
    AllFailed(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
