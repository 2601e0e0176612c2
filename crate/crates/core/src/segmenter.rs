//! Frame-by-frame classification of long recordings and conversion of the
//! resulting label stream into a timeline of labeled segments.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError, WavChunkReader};
use crate::classifier::{ClassifierError, SvmModel};
use crate::dataset::LabelSet;
use crate::features::{
    FeatureError, FeatureExtractor, FrameAssembler, FrameSpec, TextureAccumulator, TEXTURE_DIM,
};

pub const DEFAULT_SMOOTHING_RADIUS: usize = 5;
pub const DEFAULT_MIN_SEGMENT_S: f64 = 1.0;

/// Samples read per chunk when segmenting a file from disk.
const CHUNK_FRAMES: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("label stream is empty")]
    EmptyStream,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model does not record the frame spec and memory it was trained with")]
    NoFeatureConfig,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SegmenterError>;

/// One label index per analysis hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStream {
    pub labels: Vec<usize>,
    pub hop_s: f64,
}

impl LabelStream {
    pub fn new(labels: Vec<usize>, hop_s: f64) -> Result<Self> {
        if !(hop_s > 0.0 && hop_s.is_finite()) {
            return Err(SegmenterError::InvalidParams(format!("hop {hop_s} s must be positive")));
        }
        Ok(Self { labels, hop_s })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.labels.len() as f64 * self.hop_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTimeline {
    pub recording_id: String,
    pub segments: Vec<Segment>,
}

impl SegmentTimeline {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("start,end,label\n");
        for s in &self.segments {
            let _ = writeln!(out, "{},{},{}", s.start_s, s.end_s, s.label);
        }
        out
    }

    pub fn from_csv(recording_id: &str, text: &str) -> Result<Self> {
        let bad = |line: usize, why: &str| SegmenterError::InvalidParams(format!("timeline csv line {line}: {why}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "start,end,label" => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut segments = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let mut num = || {
                parts
                    .next()
                    .and_then(|p| p.trim().parse::<f64>().ok())
                    .ok_or_else(|| bad(i + 1, "bad number"))
            };
            let start_s = num()?;
            let end_s = num()?;
            let label = parts.next().ok_or_else(|| bad(i + 1, "missing label"))?.trim().to_string();
            segments.push(Segment { start_s, end_s, label });
        }
        Ok(Self {
            recording_id: recording_id.to_string(),
            segments,
        })
    }

    /// Writes `<stem>.json` and `<stem>.csv` next to each other.
    pub fn write_files(&self, json_path: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SegmenterError::Io { path, source }
        };
        std::fs::write(json_path, self.to_json()?).map_err(io(json_path))?;
        let csv = json_path.with_extension("csv");
        std::fs::write(&csv, self.to_csv()).map_err(io(&csv))?;
        Ok(())
    }

    /// Label of the segment covering `t`, if any.
    pub fn label_at(&self, t: f64) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| s.start_s <= t && t < s.end_s)
            .map(|s| s.label.as_str())
    }
}

/// Incremental classifier: feed audio in chunks of any size, then call
/// `finish`, and receive one label per analysis frame. Only one window of
/// samples and one texture memory of features are held at a time.
///
/// A texture vector summarises the trailing `memory` frames, so labelling
/// frame `i` with the texture ending at `i` would place every boundary about
/// half a memory late. Frame `i` instead gets the prediction made
/// `memory / 2` frames later, which centres the window on it; the last
/// frames reuse the final prediction.
pub struct StreamClassifier<'m> {
    model: &'m SvmModel,
    extractor: FeatureExtractor,
    assembler: FrameAssembler,
    texture: TextureAccumulator,
    lead: usize,
    produced: usize,
    last: Option<usize>,
}

impl<'m> StreamClassifier<'m> {
    pub fn new(model: &'m SvmModel, spec: FrameSpec, memory: usize, sample_rate_hz: u32) -> Result<Self> {
        if model.dim() != TEXTURE_DIM {
            return Err(ClassifierError::DimensionMismatch {
                expected: model.dim(),
                actual: TEXTURE_DIM,
            }
            .into());
        }
        Ok(Self {
            model,
            extractor: FeatureExtractor::new(spec, sample_rate_hz)?,
            assembler: FrameAssembler::new(spec),
            texture: TextureAccumulator::new(memory)?,
            lead: memory / 2,
            produced: 0,
            last: None,
        })
    }

    /// Uses the frame spec and memory stored in the model.
    pub fn from_model(model: &'m SvmModel, sample_rate_hz: u32) -> Result<Self> {
        let cfg = model.features.ok_or(SegmenterError::NoFeatureConfig)?;
        Self::new(model, cfg.frame_spec, cfg.memory, sample_rate_hz)
    }

    pub fn hop_s(&self) -> f64 {
        self.extractor.spec().hop_seconds(self.extractor.sample_rate_hz())
    }

    pub fn push(&mut self, samples: &[f64], out: &mut Vec<usize>) -> Result<()> {
        let Self {
            model,
            extractor,
            assembler,
            texture,
            lead,
            produced,
            last,
        } = self;
        assembler.push(samples, |frame| -> Result<()> {
            let fv = extractor.process_frame(frame)?;
            let label = model.predict(&texture.push(&fv).to_vec())?.label;
            *produced += 1;
            *last = Some(label);
            if *produced > *lead {
                out.push(label);
            }
            Ok(())
        })
    }

    /// Emits the labels still owed for the final frames. After this the
    /// total emitted equals the number of frames seen.
    pub fn finish(&mut self, out: &mut Vec<usize>) {
        if let Some(label) = self.last {
            out.extend(std::iter::repeat_n(label, self.produced.min(self.lead)));
        }
        self.lead = 0;
    }
}

/// One label per analysis frame of `buffer`.
pub fn classify_stream(buffer: &AudioBuffer, model: &SvmModel, spec: &FrameSpec, memory: usize) -> Result<LabelStream> {
    if buffer.len() < spec.window_size {
        return Err(FeatureError::TooShort {
            len: buffer.len(),
            window: spec.window_size,
        }
        .into());
    }
    let mut sc = StreamClassifier::new(model, *spec, memory, buffer.sample_rate_hz())?;
    let mut labels = Vec::with_capacity(spec.frame_count(buffer.len()));
    sc.push(buffer.samples(), &mut labels)?;
    sc.finish(&mut labels);
    LabelStream::new(labels, sc.hop_s())
}

/// Classifies a WAV file chunk by chunk without decoding it all at once.
pub fn classify_wav(path: &Path, model: &SvmModel) -> Result<LabelStream> {
    let mut reader = WavChunkReader::open(path)?;
    let mut sc = StreamClassifier::from_model(model, reader.sample_rate_hz())?;
    let mut labels = Vec::new();
    while let Some(chunk) = reader.next_chunk(CHUNK_FRAMES)? {
        sc.push(&chunk, &mut labels)?;
    }
    sc.finish(&mut labels);
    if labels.is_empty() {
        let window = model.features.map_or(0, |f| f.frame_spec.window_size);
        return Err(FeatureError::TooShort {
            len: reader.total_frames(),
            window,
        }
        .into());
    }
    LabelStream::new(labels, sc.hop_s())
}

/// Majority vote over the `2 * radius + 1` labels centred on each position,
/// truncated at the edges. When the top count is shared by several labels
/// the centre keeps its own label.
pub fn smooth_labels(s: &LabelStream, radius: usize) -> LabelStream {
    let n = s.labels.len();
    if n == 0 || radius == 0 {
        return s.clone();
    }
    let k = s.labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    let mut out = Vec::with_capacity(n);
    // window for position i is [i - r, i + r] clipped to the stream
    for &l in &s.labels[..radius.min(n)] {
        counts[l] += 1;
    }
    for i in 0..n {
        if i + radius < n {
            counts[s.labels[i + radius]] += 1;
        }
        if i > radius {
            counts[s.labels[i - radius - 1]] -= 1;
        }
        let best = *counts.iter().max().unwrap();
        let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == best);
        let first = winners.next().map(|(l, _)| l).unwrap();
        out.push(if winners.next().is_some() { s.labels[i] } else { first });
    }
    LabelStream {
        labels: out,
        hop_s: s.hop_s,
    }
}

/// A run of equal labels over frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

impl Run {
    fn len(&self) -> usize {
        self.end - self.start
    }
}

fn run_length(labels: &[usize]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.label == l => r.end = i + 1,
            _ => runs.push(Run { start: i, end: i + 1, label: l }),
        }
    }
    runs
}

/// Run-length encodes the stream, then repeatedly absorbs the shortest run
/// below `min_frames` into its longer neighbour (the left one on ties) until
/// every run is long enough or only one remains.
pub fn merge_short_runs(labels: &[usize], min_frames: usize) -> Vec<Run> {
    let mut runs = run_length(labels);
    loop {
        if runs.len() < 2 {
            return runs;
        }
        let Some((idx, _)) = runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.len() < min_frames)
            .min_by_key(|(i, r)| (r.len(), *i))
        else {
            return runs;
        };
        let left = idx.checked_sub(1).map(|j| runs[j].len());
        let right = runs.get(idx + 1).map(Run::len);
        let into_left = match (left, right) {
            (Some(l), Some(r)) => l >= r,
            (Some(_), None) => true,
            _ => false,
        };
        let removed = runs.remove(idx);
        if into_left {
            runs[idx - 1].end = removed.end;
            // the left neighbour may now touch a run with its own label
            if idx < runs.len() && runs[idx].label == runs[idx - 1].label {
                runs[idx - 1].end = runs[idx].end;
                runs.remove(idx);
            }
        } else {
            runs[idx].start = removed.start;
            if idx > 0 && runs[idx - 1].label == runs[idx].label {
                runs[idx - 1].end = runs[idx].end;
                runs.remove(idx);
            }
        }
    }
}

fn min_frames_for(min_duration_s: f64, hop_s: f64) -> usize {
    // a run of n frames is long enough when n * hop >= min_duration
    let n = (min_duration_s / hop_s - 1e-9).ceil();
    if n <= 0.0 {
        0
    } else {
        n as usize
    }
}

/// Segment timeline with boundaries at `i * hop_s`.
pub fn labels_to_segments(
    s: &LabelStream,
    min_duration_s: f64,
    labels: &LabelSet,
    recording_id: &str,
) -> Result<SegmentTimeline> {
    if s.is_empty() {
        return Err(SegmenterError::EmptyStream);
    }
    if !(min_duration_s >= 0.0) {
        return Err(SegmenterError::InvalidParams(format!(
            "minimum segment duration {min_duration_s} must be non-negative"
        )));
    }
    let runs = merge_short_runs(&s.labels, min_frames_for(min_duration_s, s.hop_s));
    let segments = runs
        .iter()
        .map(|r| {
            let label = labels
                .name(r.label)
                .map(str::to_string)
                .ok_or_else(|| SegmenterError::InvalidParams(format!("label index {} out of range", r.label)))?;
            Ok(Segment {
                start_s: r.start as f64 * s.hop_s,
                end_s: r.end as f64 * s.hop_s,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentTimeline {
        recording_id: recording_id.to_string(),
        segments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentOptions {
    pub radius: usize,
    pub min_duration_s: f64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            radius: DEFAULT_SMOOTHING_RADIUS,
            min_duration_s: DEFAULT_MIN_SEGMENT_S,
        }
    }
}

/// Classify, smooth and segment a WAV file with the model's stored feature
/// configuration.
pub fn segment_wav(path: &Path, recording_id: &str, model: &SvmModel, opts: &SegmentOptions) -> Result<SegmentTimeline> {
    let raw = classify_wav(path, model)?;
    let smoothed = smooth_labels(&raw, opts.radius);
    labels_to_segments(&smoothed, opts.min_duration_s, &model.label_set, recording_id)
}

/// Same as [`segment_wav`] for audio already in memory.
pub fn segment_buffer(
    buffer: &AudioBuffer,
    recording_id: &str,
    model: &SvmModel,
    opts: &SegmentOptions,
) -> Result<SegmentTimeline> {
    let cfg = model.features.ok_or(SegmenterError::NoFeatureConfig)?;
    let raw = classify_stream(buffer, model, &cfg.frame_spec, cfg.memory)?;
    let smoothed = smooth_labels(&raw, opts.radius);
    labels_to_segments(&smoothed, opts.min_duration_s, &model.label_set, recording_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(labels: &[usize], hop_s: f64) -> LabelStream {
        LabelStream::new(labels.to_vec(), hop_s).unwrap()
    }

    /// Direct restatement of the smoothing rule, one window at a time.
    fn brute_smooth(labels: &[usize], r: usize) -> Vec<usize> {
        let n = labels.len();
        (0..n)
            .map(|i| {
                let win = &labels[i.saturating_sub(r)..(i + r + 1).min(n)];
                let mut counts = std::collections::BTreeMap::new();
                for &l in win {
                    *counts.entry(l).or_insert(0) += 1;
                }
                let best = *counts.values().max().unwrap();
                let tops: Vec<usize> = counts.iter().filter(|(_, &c)| c == best).map(|(&l, _)| l).collect();
                if tops.len() == 1 {
                    tops[0]
                } else {
                    labels[i]
                }
            })
            .collect()
    }

    #[test]
    fn smoothing_examples() {
        let uniform = stream(&[2; 9], 0.1);
        assert_eq!(smooth_labels(&uniform, 3), uniform);
        let s = stream(&[0, 0, 0, 1, 0, 0, 0], 0.1);
        assert_eq!(smooth_labels(&s, 2).labels, vec![0; 7]);
        // tie inside the window: centre keeps its label
        let t = stream(&[0, 1], 0.1);
        assert_eq!(smooth_labels(&t, 1).labels, vec![0, 1]);
    }

    #[test]
    fn segment_examples() {
        let labels = LabelSet::new(["O", "B"]).unwrap();
        let s = stream(&[0, 0, 0, 1, 1], 0.05);
        let t = labels_to_segments(&s, 0.0, &labels, "r").unwrap();
        assert_eq!(t.segments.len(), 2);
        assert_eq!(t.segments[0].label, "O");
        assert!((t.segments[0].end_s - 0.15).abs() < 1e-12);
        assert!((t.segments[1].start_s - 0.15).abs() < 1e-12);
        assert!((t.segments[1].end_s - 0.25).abs() < 1e-12);

        let one = labels_to_segments(&stream(&[1; 10], 0.1), 1.0, &labels, "r").unwrap();
        assert_eq!(one.segments.len(), 1);
        assert!(matches!(
            labels_to_segments(&stream(&[], 0.1), 1.0, &labels, "r"),
            Err(SegmenterError::EmptyStream)
        ));
        assert!(LabelStream::new(vec![0], 0.0).is_err());
    }

    #[test]
    fn short_run_goes_to_longer_neighbour_left_on_ties() {
        // runs: 0 x3, 1 x1, 2 x5 -> the single 1 joins the 2s
        let runs = merge_short_runs(&[0, 0, 0, 1, 2, 2, 2, 2, 2], 2);
        assert_eq!(runs, vec![Run { start: 0, end: 3, label: 0 }, Run { start: 3, end: 9, label: 2 }]);
        let runs = merge_short_runs(&[0, 0, 1, 2, 2], 2);
        assert_eq!(runs[0], Run { start: 0, end: 3, label: 0 });
        // merging can reunite equal labels
        let runs = merge_short_runs(&[0, 0, 0, 1, 0, 0, 0], 2);
        assert_eq!(runs, vec![Run { start: 0, end: 7, label: 0 }]);
    }

    #[test]
    fn timeline_formats_round_trip() {
        let labels = LabelSet::three_class();
        let s = stream(&[0, 0, 1, 1, 1, 2], 2048.0 / 44_100.0);
        let t = labels_to_segments(&s, 0.0, &labels, "rec-1").unwrap();
        assert_eq!(SegmentTimeline::from_json(&t.to_json().unwrap()).unwrap(), t);
        let csv = t.to_csv();
        assert!(csv.starts_with("start,end,label\n"));
        assert_eq!(SegmentTimeline::from_csv("rec-1", &csv).unwrap(), t);
        assert_eq!(t.label_at(0.0), Some("orca"));
    }

    fn arb_labels() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..4, 1..200)
    }

    proptest! {
        #[test]
        fn smoothing_matches_brute_force(labels in arb_labels(), r in 0usize..8) {
            let s = stream(&labels, 0.05);
            prop_assert_eq!(smooth_labels(&s, r).labels, brute_smooth(&labels, r));
        }

        #[test]
        fn smoothing_keeps_labels_from_the_window(labels in arb_labels(), r in 0usize..8) {
            let out = smooth_labels(&stream(&labels, 0.05), r).labels;
            let n = labels.len();
            for (i, l) in out.iter().enumerate() {
                prop_assert!(labels[i.saturating_sub(r)..(i + r + 1).min(n)].contains(l));
            }
        }

        #[test]
        fn timeline_covers_the_stream(labels in arb_labels(), min in 0.0f64..3.0, hop in 0.01f64..0.2) {
            let names = LabelSet::new(["a", "b", "c", "d"]).unwrap();
            let s = stream(&labels, hop);
            let t = labels_to_segments(&s, min, &names, "r").unwrap();
            prop_assert_eq!(t.segments[0].start_s, 0.0);
            prop_assert_eq!(t.segments.last().unwrap().end_s, labels.len() as f64 * hop);
            for w in t.segments.windows(2) {
                prop_assert_eq!(w[0].end_s, w[1].start_s);
                prop_assert!(w[0].label != w[1].label);
            }
            let total: f64 = t.segments.iter().map(|s| s.end_s - s.start_s).sum();
            prop_assert!((total - s.duration_s()).abs() < 1e-9);
            if t.segments.len() > 1 {
                for seg in &t.segments {
                    prop_assert!(seg.end_s - seg.start_s >= min - 1e-9);
                }
            }
        }

        #[test]
        fn longer_minimum_never_adds_segments(labels in arb_labels(), a in 0usize..30, b in 0usize..30) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(merge_short_runs(&labels, hi).len() <= merge_short_runs(&labels, lo).len());
        }
    }
}
