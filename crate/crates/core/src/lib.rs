//! Core pipeline for classifying hydrophone recordings.
//!
//! The pieces compose left to right: [`audio`] loads and slices recordings,
//! [`features`] turns a buffer into per-frame spectral descriptors and their
//! texture-window statistics, [`dataset`] assembles labeled clips into
//! training sets, [`classifier`] trains a one-vs-one SMO support vector
//! machine on them, and [`segmenter`] applies a trained model to long
//! recordings to produce labeled timelines.

pub mod audio;
pub mod classifier;
pub mod dataset;
pub mod features;
pub mod segmenter;

pub use audio::{AudioBuffer, AudioError};
pub use classifier::{ConfusionMatrix, Kernel, SvmModel, TrainParams};
pub use dataset::{Annotation, Dataset, LabelSet};
pub use features::{FeatureVector, FrameSpec, TextureVector, WindowFunction};
pub use segmenter::{LabelStream, SegmentTimeline};

/// Sample rate assumed for corpus defaults when converting durations to
/// sample counts.
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 44_100;
