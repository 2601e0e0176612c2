//! Short-time spectral features.
//!
//! Every analysis frame yields a [`FeatureVector`] of 17 values: spectral
//! centroid, rolloff, flux, zero-crossing count and 13 MFCCs. Sequences of
//! frame vectors are summarised into [`TextureVector`]s, the per-dimension
//! mean and population standard deviation over a sliding "memory" of recent
//! frames. Texture vectors are what the classifier consumes.

mod mfcc;
mod spectrum;
mod texture;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;

pub use mfcc::{hz_to_mel, mel_to_hz, mfcc, MelFilterbank, LOG_FLOOR, MEL_FILTERS, MFCC_COEFFS};
pub use spectrum::{
    centroid, flux, magnitude_spectrum, rolloff, zero_crossings, SpectralFrame, SpectrumAnalyzer,
};
pub use texture::{texture_stats, TextureAccumulator, TextureVector};

/// Values per analysis frame.
pub const FRAME_DIM: usize = 4 + MFCC_COEFFS;
/// Values per texture vector (means followed by standard deviations).
pub const TEXTURE_DIM: usize = 2 * FRAME_DIM;

pub const DEFAULT_WINDOW: usize = 4096;
pub const DEFAULT_HOP: usize = 2048;
pub const DEFAULT_MEMORY: usize = 80;
pub const DEFAULT_ROLLOFF: f64 = 0.85;

pub const MIN_WINDOW: usize = 256;
pub const MAX_WINDOW: usize = 16_384;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("frame length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("expected a frame of {expected} samples, got {actual}")]
    FrameLength { expected: usize, actual: usize },
    #[error("spectra have different bin counts ({0} vs {1})")]
    BinMismatch(usize, usize),
    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("invalid frame spec: {0}")]
    InvalidSpec(String),
    #[error("texture memory must be at least one frame")]
    ZeroMemory,
    #[error("no feature frames to summarise")]
    Empty,
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowFunction {
    #[default]
    Hamming,
    Hann,
    Rectangular,
}

impl WindowFunction {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        use std::f64::consts::PI;
        let denom = (n.max(2) - 1) as f64;
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / denom;
                match self {
                    WindowFunction::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowFunction::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowFunction::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl fmt::Display for WindowFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowFunction::Hamming => "hamming",
            WindowFunction::Hann => "hann",
            WindowFunction::Rectangular => "rectangular",
        })
    }
}

impl FromStr for WindowFunction {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hamming" => Ok(Self::Hamming),
            "hann" | "hanning" => Ok(Self::Hann),
            "rectangular" | "rect" | "none" => Ok(Self::Rectangular),
            other => Err(FeatureError::InvalidSpec(format!("unknown window {other:?}"))),
        }
    }
}

/// Analysis window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameSpec {
    pub window_size: usize,
    pub hop_size: usize,
    #[serde(default)]
    pub window_function: WindowFunction,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            window_size: DEFAULT_WINDOW,
            hop_size: DEFAULT_HOP,
            window_function: WindowFunction::Hamming,
        }
    }
}

impl FrameSpec {
    pub fn new(window_size: usize, hop_size: usize, window_function: WindowFunction) -> Result<Self> {
        let spec = Self {
            window_size,
            hop_size,
            window_function,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Hop of half a window, as used throughout the parameter sweep.
    pub fn half_overlap(window_size: usize) -> Result<Self> {
        Self::new(window_size, window_size / 2, WindowFunction::Hamming)
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.window_size;
        if !w.is_power_of_two() || !(MIN_WINDOW..=MAX_WINDOW).contains(&w) {
            return Err(FeatureError::InvalidSpec(format!(
                "window {w} must be a power of two in {MIN_WINDOW}..={MAX_WINDOW}"
            )));
        }
        if self.hop_size == 0 || self.hop_size > w {
            return Err(FeatureError::InvalidSpec(format!(
                "hop {} must be in 1..={w}",
                self.hop_size
            )));
        }
        Ok(())
    }

    /// Number of full windows that fit in `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_size {
            0
        } else {
            (len - self.window_size) / self.hop_size + 1
        }
    }

    pub fn hop_seconds(&self, sample_rate_hz: u32) -> f64 {
        self.hop_size as f64 / sample_rate_hz as f64
    }
}

/// Splits a buffer into overlapping frames, each multiplied by the window.
pub fn frame_signal(buffer: &AudioBuffer, spec: &FrameSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if buffer.len() < spec.window_size {
        return Err(FeatureError::TooShort {
            len: buffer.len(),
            window: spec.window_size,
        });
    }
    let window = spec.window_function.coefficients(spec.window_size);
    let frames = (0..spec.frame_count(buffer.len()))
        .map(|i| {
            let start = i * spec.hop_size;
            buffer.samples()[start..start + spec.window_size]
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect()
        })
        .collect();
    Ok(frames)
}

/// Per-frame descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub centroid_hz: f64,
    pub rolloff_hz: f64,
    pub flux: f64,
    pub zcr: f64,
    pub mfcc: [f64; MFCC_COEFFS],
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FRAME_DIM] {
        let mut out = [0.0; FRAME_DIM];
        out[0] = self.centroid_hz;
        out[1] = self.rolloff_hz;
        out[2] = self.flux;
        out[3] = self.zcr;
        out[4..].copy_from_slice(&self.mfcc);
        out
    }

    pub fn from_array(a: &[f64; FRAME_DIM]) -> Self {
        let mut mfcc = [0.0; MFCC_COEFFS];
        mfcc.copy_from_slice(&a[4..]);
        Self {
            centroid_hz: a[0],
            rolloff_hz: a[1],
            flux: a[2],
            zcr: a[3],
            mfcc,
        }
    }
}

pub fn frame_feature_names() -> Vec<String> {
    let mut names: Vec<String> = ["centroid", "rolloff", "flux", "zcr"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..MFCC_COEFFS).map(|i| format!("mfcc{i}")));
    names
}

/// Names of the 34 texture dimensions, means first.
pub fn texture_feature_names() -> Vec<String> {
    let base = frame_feature_names();
    base.iter()
        .map(|n| format!("mean_{n}"))
        .chain(base.iter().map(|n| format!("std_{n}")))
        .collect()
}

/// Stateful per-frame feature computation for one stream. Flux depends on
/// the previous spectrum, so an extractor must see frames in order.
pub struct FeatureExtractor {
    spec: FrameSpec,
    sample_rate_hz: u32,
    window: Vec<f64>,
    analyzer: SpectrumAnalyzer,
    filterbank: MelFilterbank,
    previous: Vec<f64>,
    scratch: Vec<f64>,
    rolloff_pct: f64,
}

impl FeatureExtractor {
    pub fn new(spec: FrameSpec, sample_rate_hz: u32) -> Result<Self> {
        spec.validate()?;
        let bins = spec.window_size / 2 + 1;
        Ok(Self {
            window: spec.window_function.coefficients(spec.window_size),
            analyzer: SpectrumAnalyzer::new(spec.window_size)?,
            filterbank: MelFilterbank::new(bins, sample_rate_hz as f64 / spec.window_size as f64),
            previous: vec![0.0; bins],
            scratch: vec![0.0; spec.window_size],
            spec,
            sample_rate_hz,
            rolloff_pct: DEFAULT_ROLLOFF,
        })
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Features of one raw (unwindowed) frame of exactly `window_size`
    /// samples.
    pub fn process_frame(&mut self, raw: &[f64]) -> Result<FeatureVector> {
        if raw.len() != self.spec.window_size {
            return Err(FeatureError::FrameLength {
                expected: self.spec.window_size,
                actual: raw.len(),
            });
        }
        let zcr = zero_crossings(raw) as f64;
        for ((dst, x), w) in self.scratch.iter_mut().zip(raw).zip(&self.window) {
            *dst = x * w;
        }
        let s = self.analyzer.analyze(&self.scratch, self.sample_rate_hz)?;
        let fv = FeatureVector {
            centroid_hz: centroid(&s),
            rolloff_hz: rolloff(&s, self.rolloff_pct),
            flux: spectrum::flux_raw(&s.magnitudes, &self.previous),
            zcr,
            mfcc: self.filterbank.mfcc(&s),
        };
        self.previous = s.magnitudes;
        Ok(fv)
    }

    /// All frame features of a buffer, starting from a fresh flux state.
    pub fn process_buffer(&mut self, buffer: &AudioBuffer) -> Result<Vec<FeatureVector>> {
        if buffer.len() < self.spec.window_size {
            return Err(FeatureError::TooShort {
                len: buffer.len(),
                window: self.spec.window_size,
            });
        }
        self.reset();
        let (w, h) = (self.spec.window_size, self.spec.hop_size);
        (0..self.spec.frame_count(buffer.len()))
            .map(|i| self.process_frame(&buffer.samples()[i * h..i * h + w]))
            .collect()
    }

    pub fn reset(&mut self) {
        self.previous.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Per-frame features of a whole buffer.
pub fn extract_frames(buffer: &AudioBuffer, spec: &FrameSpec) -> Result<Vec<FeatureVector>> {
    FeatureExtractor::new(*spec, buffer.sample_rate_hz())?.process_buffer(buffer)
}

/// One texture vector summarising every frame of the clip.
pub fn extract_clip_features(buffer: &AudioBuffer, spec: &FrameSpec) -> Result<TextureVector> {
    let frames = extract_frames(buffer, spec)?;
    TextureVector::from_frames(&frames)
}

/// Streaming texture vectors: one per hop, each over the trailing `memory`
/// frames.
pub fn extract_texture_stream(
    buffer: &AudioBuffer,
    spec: &FrameSpec,
    memory: usize,
) -> Result<Vec<TextureVector>> {
    let frames = extract_frames(buffer, spec)?;
    texture_stats(&frames, memory)
}

/// Buffers raw samples from arbitrary-size chunks and yields complete
/// analysis frames, so long recordings can be analysed without holding them
/// in memory.
pub struct FrameAssembler {
    spec: FrameSpec,
    pending: VecDeque<f64>,
    frame: Vec<f64>,
}

impl FrameAssembler {
    pub fn new(spec: FrameSpec) -> Self {
        Self {
            pending: VecDeque::with_capacity(2 * spec.window_size),
            frame: vec![0.0; spec.window_size],
            spec,
        }
    }

    /// Feeds samples, calling `on_frame` for every complete window.
    pub fn push<E>(
        &mut self,
        samples: &[f64],
        mut on_frame: impl FnMut(&[f64]) -> std::result::Result<(), E>,
    ) -> std::result::Result<(), E> {
        for &s in samples {
            self.pending.push_back(s);
            if self.pending.len() == self.spec.window_size {
                for (dst, src) in self.frame.iter_mut().zip(self.pending.iter()) {
                    *dst = *src;
                }
                on_frame(&self.frame)?;
                let drop = self.spec.hop_size.min(self.pending.len());
                self.pending.drain(..drop);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buffer(samples: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(samples, 44_100).unwrap()
    }

    #[test]
    fn frame_counts() {
        let spec = FrameSpec::new(512, 256, WindowFunction::Hamming).unwrap();
        assert_eq!(frame_signal(&buffer(vec![0.0; 2048]), &spec).unwrap().len(), 7);
        for hop in [1, 100, 512] {
            let spec = FrameSpec::new(512, hop, WindowFunction::Hann).unwrap();
            assert_eq!(frame_signal(&buffer(vec![0.0; 512]), &spec).unwrap().len(), 1);
        }
    }

    #[test]
    fn rectangular_window_is_identity() {
        let spec = FrameSpec::new(256, 128, WindowFunction::Rectangular).unwrap();
        for f in frame_signal(&buffer(vec![1.0; 1000]), &spec).unwrap() {
            assert!(f.iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn short_buffer_and_bad_spec_rejected() {
        let spec = FrameSpec::default();
        assert!(matches!(
            frame_signal(&buffer(vec![0.0; 100]), &spec),
            Err(FeatureError::TooShort { len: 100, window: 4096 })
        ));
        assert!(FrameSpec::new(1000, 500, WindowFunction::Hamming).is_err());
        assert!(FrameSpec::new(128, 64, WindowFunction::Hamming).is_err());
        assert!(FrameSpec::new(32_768, 64, WindowFunction::Hamming).is_err());
        assert!(FrameSpec::new(512, 0, WindowFunction::Hamming).is_err());
        assert!(FrameSpec::new(512, 513, WindowFunction::Hamming).is_err());
    }

    #[test]
    fn dimensions_and_names() {
        assert_eq!(FRAME_DIM, 17);
        assert_eq!(TEXTURE_DIM, 34);
        let names = texture_feature_names();
        assert_eq!(names.len(), 34);
        assert_eq!(names[0], "mean_centroid");
        assert_eq!(names[33], "std_mfcc12");
    }

    #[test]
    fn window_parses() {
        assert_eq!("Hann".parse::<WindowFunction>().unwrap(), WindowFunction::Hann);
        assert!("kaiser".parse::<WindowFunction>().is_err());
    }

    #[test]
    fn first_frame_flux_pairs_with_silence() {
        let samples: Vec<f64> = (0..1024).map(|i| (i as f64 * 0.05).sin()).collect();
        let spec = FrameSpec::new(512, 512, WindowFunction::Hamming).unwrap();
        let frames = extract_frames(&buffer(samples), &spec).unwrap();
        assert!((frames[0].flux - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_tone_has_no_flux_after_first_frame() {
        let sr = 44_100.0;
        // 1024-sample hop keeps a 43-cycle period alignment: choose the tone
        // so an integer number of cycles fits in one hop.
        let f = 43.0 * sr / 1024.0;
        let samples: Vec<f64> = (0..20_000)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / sr).sin())
            .collect();
        let spec = FrameSpec::new(2048, 1024, WindowFunction::Hamming).unwrap();
        let frames = extract_frames(&buffer(samples), &spec).unwrap();
        for fv in &frames[1..] {
            assert!(fv.flux <= 1e-6, "flux {}", fv.flux);
        }
    }

    #[test]
    fn tone_clip_centroid_within_one_bin() {
        let sr = 44_100u32;
        // Hamming sidelobes decay too slowly for a linear-magnitude centroid
        // to sit within one bin of the tone; Hann leakage falls off fast
        // enough.
        let spec = FrameSpec::new(4096, 2048, WindowFunction::Hann).unwrap();
        let bin_hz = sr as f64 / spec.window_size as f64;
        for f in [1000.0, 2500.0, 6000.0] {
            let samples: Vec<f64> = (0..sr as usize)
                .map(|i| 0.8 * (2.0 * std::f64::consts::PI * f * i as f64 / sr as f64).sin())
                .collect();
            let t = extract_clip_features(&buffer(samples), &spec).unwrap();
            assert!((t.means[0] - f).abs() <= bin_hz, "f={f}: {}", t.means[0]);
        }
    }

    #[test]
    fn identical_frames_give_zero_deviation() {
        // hop equal to the period of the signal repeats every frame exactly
        let period = 256;
        let samples: Vec<f64> = (0..period * 40)
            .map(|i| ((i % period) as f64 / period as f64) - 0.5)
            .collect();
        let spec = FrameSpec::new(1024, period, WindowFunction::Hamming).unwrap();
        let frames = extract_frames(&buffer(samples), &spec).unwrap();
        // drop the first frame, whose flux is taken against silence
        let t = TextureVector::from_frames(&frames[1..]).unwrap();
        for s in t.stddevs {
            assert!(s.abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn assembler_matches_direct_framing() {
        let samples: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let spec = FrameSpec::new(512, 200, WindowFunction::Rectangular).unwrap();
        let direct = frame_signal(&buffer(samples.clone()), &spec).unwrap();
        let mut asm = FrameAssembler::new(spec);
        let mut got = Vec::new();
        for chunk in samples.chunks(333) {
            asm.push::<()>(chunk, |f| {
                got.push(f.to_vec());
                Ok(())
            })
            .unwrap();
        }
        assert_eq!(got, direct);
    }
}
