//! On-demand spectrogram tiles: Hann-windowed STFT frames max-pooled onto
//! the requested time × frequency grid, in dB.

use std::path::Path;

use orcaclass_core::audio::{read_wav_range, AudioError};
use orcaclass_core::features::{FrameSpec, SpectrumAnalyzer, WindowFunction};
use serde::{Deserialize, Serialize};

pub const DB_FLOOR: f64 = -80.0;
pub const MAX_TIME_PX: usize = 4096;
pub const MAX_FREQ_BINS: usize = 1024;
/// 1025 frequency bins, so every one of up to 1024 rows gets at least one.
pub const TILE_WINDOW: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileRequest {
    pub start_s: f64,
    pub end_s: f64,
    pub time_px: usize,
    pub freq_bins: usize,
}

impl TileRequest {
    /// Checks the request against a recording's duration.
    pub fn validate(&self, duration_s: f64) -> Result<(), String> {
        if !(self.start_s >= 0.0 && self.start_s < self.end_s && self.end_s <= duration_s + 1e-9) {
            return Err(format!(
                "need 0 <= start < end <= {duration_s} (got start {} end {})",
                self.start_s, self.end_s
            ));
        }
        if !(1..=MAX_TIME_PX).contains(&self.time_px) {
            return Err(format!("time_px must be in 1..={MAX_TIME_PX}"));
        }
        if !(1..=MAX_FREQ_BINS).contains(&self.freq_bins) {
            return Err(format!("freq_bins must be in 1..={MAX_FREQ_BINS}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramTile {
    pub recording_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub time_px: usize,
    pub freq_bins: usize,
    pub floor_db: f64,
    pub sample_rate_hz: u32,
    /// Window and the nominal hop between analysed frames.
    pub frame_spec: FrameSpec,
    /// Width in Hz of each output row; row 0 starts at 0 Hz.
    pub row_hz: f64,
    /// `bins[t][f]`, one row per time column, low frequencies first.
    pub bins: Vec<Vec<f32>>,
}

/// Frames centred evenly across each column (at most half a window
/// apart) are max-pooled; frequency bins are max-pooled into rows. A sine
/// of amplitude 1 reads 0 dB.
pub fn compute_tile(path: &Path, recording_id: &str, sample_rate_hz: u32, req: &TileRequest) -> Result<SpectrogramTile, AudioError> {
    let sr = sample_rate_hz as f64;
    let half = TILE_WINDOW / 2;
    let first = (req.start_s * sr).round() as usize;
    let last = ((req.end_s * sr).round() as usize).max(first + 1);
    let col_width = (last - first) as f64 / req.time_px as f64;
    let per_col = (col_width / half as f64).ceil().max(1.0) as usize;

    // decode the range plus half a window either side; zero beyond the file
    let lo = first.saturating_sub(half);
    let audio = read_wav_range(path, lo, last + half - lo)?;
    let samples = audio.samples();
    let at = |abs: isize| -> f64 {
        let i = abs - lo as isize;
        if i < 0 {
            0.0
        } else {
            samples.get(i as usize).copied().unwrap_or(0.0)
        }
    };

    let window = WindowFunction::Hann.coefficients(TILE_WINDOW);
    let reference = window.iter().sum::<f64>() / 2.0;
    let mut analyzer = SpectrumAnalyzer::new(TILE_WINDOW).expect("tile window is a power of two");
    let n_bins = half + 1;
    let mut frame = vec![0.0; TILE_WINDOW];
    let mut bins = Vec::with_capacity(req.time_px);
    for c in 0..req.time_px {
        let mut column = vec![0.0f64; req.freq_bins];
        for j in 0..per_col {
            let centre = first as f64 + col_width * (c as f64 + (j as f64 + 0.5) / per_col as f64);
            let begin = centre.floor() as isize - half as isize;
            for (k, (x, w)) in frame.iter_mut().zip(&window).enumerate() {
                *x = at(begin + k as isize) * w;
            }
            let spectrum = analyzer.analyze(&frame, sample_rate_hz).expect("frame length matches");
            for (r, cell) in column.iter_mut().enumerate() {
                let (b0, b1) = (r * n_bins / req.freq_bins, (r + 1) * n_bins / req.freq_bins);
                let peak = spectrum.magnitudes[b0..b1.max(b0 + 1)].iter().fold(0.0f64, |m, &v| m.max(v));
                *cell = cell.max(peak);
            }
        }
        bins.push(
            column
                .into_iter()
                .map(|m| {
                    let db = if m > 0.0 { 20.0 * (m / reference).log10() } else { DB_FLOOR };
                    db.max(DB_FLOOR) as f32
                })
                .collect(),
        );
    }
    let hop = ((col_width / per_col as f64).round() as usize).clamp(1, TILE_WINDOW);
    Ok(SpectrogramTile {
        recording_id: recording_id.to_string(),
        start_s: req.start_s,
        end_s: req.end_s,
        time_px: req.time_px,
        freq_bins: req.freq_bins,
        floor_db: DB_FLOOR,
        sample_rate_hz,
        frame_spec: FrameSpec {
            window_size: TILE_WINDOW,
            hop_size: hop,
            window_function: WindowFunction::Hann,
        },
        row_hz: sr / 2.0 * n_bins as f64 / (n_bins - 1) as f64 / req.freq_bins as f64,
        bins,
    })
}
