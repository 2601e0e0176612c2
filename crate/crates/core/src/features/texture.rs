use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureVector, Result, FRAME_DIM, TEXTURE_DIM};

/// Mean and population standard deviation of frame features over a window
/// of `memory` frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureVector {
    pub means: [f64; FRAME_DIM],
    pub stddevs: [f64; FRAME_DIM],
    pub memory: usize,
}

impl TextureVector {
    pub fn from_frames(frames: &[FeatureVector]) -> Result<Self> {
        if frames.is_empty() {
            return Err(FeatureError::Empty);
        }
        let rows: Vec<[f64; FRAME_DIM]> = frames.iter().map(FeatureVector::to_array).collect();
        Ok(summarise(rows.iter(), frames.len()))
    }

    /// Flattened as means then standard deviations.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(TEXTURE_DIM);
        v.extend_from_slice(&self.means);
        v.extend_from_slice(&self.stddevs);
        v
    }
}

fn summarise<'a>(rows: impl Iterator<Item = &'a [f64; FRAME_DIM]> + Clone, n: usize) -> TextureVector {
    let mut means = [0.0; FRAME_DIM];
    for r in rows.clone() {
        for (m, x) in means.iter_mut().zip(r) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut stddevs = [0.0; FRAME_DIM];
    for r in rows {
        for ((s, x), m) in stddevs.iter_mut().zip(r).zip(&means) {
            let d = x - m;
            *s += d * d;
        }
    }
    stddevs.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());
    TextureVector {
        means,
        stddevs,
        memory: n,
    }
}

/// Sliding-window texture statistics for one stream. The window grows until
/// it holds `memory` frames, then slides.
#[derive(Debug, Clone)]
pub struct TextureAccumulator {
    memory: usize,
    window: VecDeque<[f64; FRAME_DIM]>,
}

impl TextureAccumulator {
    pub fn new(memory: usize) -> Result<Self> {
        if memory == 0 {
            return Err(FeatureError::ZeroMemory);
        }
        Ok(Self {
            memory,
            window: VecDeque::with_capacity(memory),
        })
    }

    pub fn push(&mut self, frame: &FeatureVector) -> TextureVector {
        if self.window.len() == self.memory {
            self.window.pop_front();
        }
        self.window.push_back(frame.to_array());
        summarise(self.window.iter(), self.window.len())
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }
}

/// One texture vector per input frame.
pub fn texture_stats(frames: &[FeatureVector], memory: usize) -> Result<Vec<TextureVector>> {
    if frames.is_empty() {
        return Err(FeatureError::Empty);
    }
    let mut acc = TextureAccumulator::new(memory)?;
    Ok(frames.iter().map(|f| acc.push(f)).collect())
}
