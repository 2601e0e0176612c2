use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FeatureError, Result};

/// Magnitudes of the non-negative frequency bins of one analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    pub magnitudes: Vec<f64>,
    pub bin_hz: f64,
}

impl SpectralFrame {
    pub fn new(magnitudes: Vec<f64>, bin_hz: f64) -> Self {
        debug_assert!(magnitudes.iter().all(|&m| m >= 0.0));
        Self { magnitudes, bin_hz }
    }

    pub fn bin_count(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.frequency(self.bin_count().saturating_sub(1))
    }
}

/// Forward FFT of a fixed power-of-two size with reusable scratch space.
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    size: usize,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl SpectrumAnalyzer {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(FeatureError::NotPowerOfTwo(size));
        }
        let fft = FftPlanner::new().plan_fft_forward(size);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            fft,
            size,
            buffer: vec![Complex::default(); size],
            scratch,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn analyze(&mut self, frame: &[f64], sample_rate_hz: u32) -> Result<SpectralFrame> {
        if frame.len() != self.size {
            return Err(FeatureError::FrameLength {
                expected: self.size,
                actual: frame.len(),
            });
        }
        for (dst, &x) in self.buffer.iter_mut().zip(frame) {
            *dst = Complex::new(x, 0.0);
        }
        self.fft
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let magnitudes = self.buffer[..self.size / 2 + 1]
            .iter()
            .map(|c| c.norm())
            .collect();
        Ok(SpectralFrame::new(
            magnitudes,
            sample_rate_hz as f64 / self.size as f64,
        ))
    }
}

/// One-shot magnitude spectrum. Plans a fresh FFT on every call; use
/// [`SpectrumAnalyzer`] in loops.
pub fn magnitude_spectrum(frame: &[f64], sample_rate_hz: u32) -> Result<SpectralFrame> {
    SpectrumAnalyzer::new(frame.len())?.analyze(frame, sample_rate_hz)
}

/// Spectral centroid in Hz; zero for an all-zero spectrum.
pub fn centroid(s: &SpectralFrame) -> f64 {
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (i, &m) in s.magnitudes.iter().enumerate() {
        weighted += s.frequency(i) * m;
        total += m;
    }
    if total > 0.0 {
        weighted / total
    } else {
        0.0
    }
}

/// Frequency of the first bin at which the cumulative magnitude reaches
/// `pct` of the total.
pub fn rolloff(s: &SpectralFrame, pct: f64) -> f64 {
    let total: f64 = s.magnitudes.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let target = pct * total;
    let mut acc = 0.0;
    for (i, &m) in s.magnitudes.iter().enumerate() {
        acc += m;
        if acc >= target {
            return s.frequency(i);
        }
    }
    s.nyquist_hz()
}

/// L2 distance between the unit-normalized magnitude vectors.
pub fn flux(current: &SpectralFrame, previous: &SpectralFrame) -> Result<f64> {
    if current.bin_count() != previous.bin_count() {
        return Err(FeatureError::BinMismatch(current.bin_count(), previous.bin_count()));
    }
    Ok(flux_raw(&current.magnitudes, &previous.magnitudes))
}

pub(crate) fn flux_raw(current: &[f64], previous: &[f64]) -> f64 {
    let norm = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            1.0 / n
        } else {
            0.0
        }
    };
    let (sc, sp) = (norm(current), norm(previous));
    current
        .iter()
        .zip(previous)
        .map(|(c, p)| {
            let d = c * sc - p * sp;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Adjacent sample pairs whose signs differ, with zero counted as positive.
pub fn zero_crossings(frame: &[f64]) -> usize {
    frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count()
}
