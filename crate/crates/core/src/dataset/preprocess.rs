use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};
use crate::audio::AudioBuffer;

pub const DEFAULT_SILENCE_RATIO: f64 = 0.1;
/// Middle-of-clip excerpt length used for orca calls.
pub const ORCA_MIDDLE_S: f64 = 0.023;
/// Middle-of-clip excerpt length used for background clips.
pub const BACKGROUND_MIDDLE_S: f64 = 0.15;

const TRIM_FRAME_S: f64 = 0.020;
const TRIM_HOP_S: f64 = 0.010;

fn frame_rms(x: &[f64]) -> f64 {
    (x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64).sqrt()
}

/// Drops leading and trailing 20 ms frames (10 ms hop) whose RMS falls below
/// `threshold_ratio` times the clip's 90th-percentile frame RMS.
pub fn trim_silence(buffer: &AudioBuffer, threshold_ratio: f64) -> Result<AudioBuffer> {
    if !(threshold_ratio > 0.0 && threshold_ratio < 1.0) {
        return Err(DatasetError::Feature(crate::features::FeatureError::InvalidSpec(format!(
            "silence threshold ratio {threshold_ratio} must be in (0, 1)"
        ))));
    }
    let sr = buffer.sample_rate_hz() as f64;
    let len = buffer.len();
    let frame = ((TRIM_FRAME_S * sr).round() as usize).max(1);
    let hop = ((TRIM_HOP_S * sr).round() as usize).max(1);
    let samples = buffer.samples();

    let starts: Vec<usize> = if len <= frame {
        vec![0]
    } else {
        (0..=(len - frame) / hop).map(|i| i * hop).collect()
    };
    let rms: Vec<f64> = starts
        .iter()
        .map(|&s| frame_rms(&samples[s..(s + frame).min(len)]))
        .collect();

    let mut sorted = rms.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.last().copied().unwrap_or(0.0) <= 0.0 {
        return Err(DatasetError::AllSilence);
    }
    let rank = ((0.9 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let threshold = threshold_ratio * sorted[rank - 1];

    let loud = |r: &f64| *r >= threshold && *r > 0.0;
    let first = rms.iter().position(loud).ok_or(DatasetError::AllSilence)?;
    let last = rms.iter().rposition(loud).ok_or(DatasetError::AllSilence)?;

    let start = starts[first];
    let end = if last + 1 == starts.len() {
        len
    } else {
        (starts[last] + frame).min(len)
    };
    Ok(buffer.slice_samples(start, end))
}

/// Excerpt of `dur_s` centred on the clip midpoint; the whole clip when it
/// is no longer than `dur_s`.
pub fn middle_extract(buffer: &AudioBuffer, dur_s: f64) -> AudioBuffer {
    let n = ((dur_s * buffer.sample_rate_hz() as f64).round() as usize).max(1);
    if n >= buffer.len() {
        return buffer.clone();
    }
    let start = (buffer.len() - n) / 2;
    buffer.slice_samples(start, start + n)
}

/// Excerpt lengths for middle extraction, optionally per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiddleExtract {
    pub default_s: f64,
    #[serde(default)]
    pub per_label: BTreeMap<String, f64>,
}

impl MiddleExtract {
    pub fn uniform(dur_s: f64) -> Self {
        Self {
            default_s: dur_s,
            per_label: BTreeMap::new(),
        }
    }

    pub fn duration_for(&self, label: &str) -> f64 {
        self.per_label.get(label).copied().unwrap_or(self.default_s)
    }
}

/// How each annotated clip is cut down before feature extraction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preprocessing {
    #[default]
    None,
    TrimSilence {
        threshold_ratio: f64,
    },
    MiddleExtract(MiddleExtract),
}

impl Preprocessing {
    pub fn apply(&self, clip: &AudioBuffer, label: &str) -> Result<AudioBuffer> {
        match self {
            Preprocessing::None => Ok(clip.clone()),
            Preprocessing::TrimSilence { threshold_ratio } => trim_silence(clip, *threshold_ratio),
            Preprocessing::MiddleExtract(m) => Ok(middle_extract(clip, m.duration_for(label))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(n: usize, sr: u32, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
            .collect()
    }

    #[test]
    fn trims_surrounding_silence() {
        let sr = 8000u32;
        let mut s = vec![0.0; sr as usize];
        s.extend(tone(sr as usize, sr, 0.5));
        s.extend(vec![0.0; sr as usize]);
        let b = AudioBuffer::new(s, sr).unwrap();
        let t = trim_silence(&b, 0.1).unwrap();
        // locate the kept region: the tone's first nonzero sample is 8001
        let p = t.samples().iter().position(|&x| x != 0.0).unwrap();
        let offset = sr as usize + 1 - p;
        let hop = (0.01 * sr as f64) as usize;
        assert!(offset.abs_diff(sr as usize) <= hop, "start {offset}");
        assert!((offset + t.len()).abs_diff(2 * sr as usize) <= hop, "end {}", offset + t.len());
    }

    #[test]
    fn untouched_when_nothing_is_quiet() {
        let b = AudioBuffer::new(tone(12_345, 8000, 0.3), 8000).unwrap();
        assert_eq!(trim_silence(&b, 0.1).unwrap(), b);
    }

    #[test]
    fn all_zero_is_all_silence() {
        let b = AudioBuffer::new(vec![0.0; 4000], 8000).unwrap();
        assert!(matches!(trim_silence(&b, 0.1), Err(DatasetError::AllSilence)));
    }

    #[test]
    fn middle_extract_examples() {
        let sr = 44_100u32;
        let b = AudioBuffer::new(vec![0.1; 10 * sr as usize], sr).unwrap();
        let m = middle_extract(&b, ORCA_MIDDLE_S);
        assert!((m.duration_s() - 0.023).abs() <= 1.0 / sr as f64);
        let n = m.len();
        let start = (b.len() - n) / 2;
        assert!((start as f64 / sr as f64 - 4.9885).abs() <= 1.0 / sr as f64);
        let short = AudioBuffer::new(vec![0.1; 441], sr).unwrap();
        assert_eq!(middle_extract(&short, 0.023), short);
        assert_eq!(BACKGROUND_MIDDLE_S, 0.15);
    }

    proptest! {
        #[test]
        fn trimming_is_idempotent(
            lead in 0usize..6000,
            body in 2000usize..10_000,
            tail in 0usize..6000,
            amp in 0.05f64..0.9,
        ) {
            let sr = 8000u32;
            let mut s = vec![0.0; lead];
            s.extend(tone(body, sr, amp));
            s.extend(vec![0.0; tail]);
            prop_assume!(body * 2 > lead + tail);
            let b = AudioBuffer::new(s, sr).unwrap();
            let once = trim_silence(&b, 0.1).unwrap();
            let twice = trim_silence(&once, 0.1).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn middle_extract_duration(len in 1usize..50_000, dur in 0.001f64..3.0) {
            let sr = 8000u32;
            let b = AudioBuffer::new(vec![0.2; len], sr).unwrap();
            let m = middle_extract(&b, dur);
            let expected = dur.min(b.duration_s());
            prop_assert!((m.duration_s() - expected).abs() <= 1.0 / sr as f64 + 1e-12);
        }
    }
}
