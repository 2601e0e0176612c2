use super::SpectralFrame;

pub const MEL_FILTERS: usize = 40;
pub const MFCC_COEFFS: usize = 13;
/// Floor added to filter energies before taking the log.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters spanning 0 Hz to Nyquist, evaluated on the bin
/// centre frequencies of one FFT size, followed by an orthonormal DCT-II.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Per filter: first bin index and the weights from that bin on.
    filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<[f64; MEL_FILTERS]>,
    bins: usize,
}

impl MelFilterbank {
    pub fn new(bins: usize, bin_hz: f64) -> Self {
        let nyquist = (bins - 1) as f64 * bin_hz;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..MEL_FILTERS + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (MEL_FILTERS + 1) as f64))
            .collect();

        let filters = (0..MEL_FILTERS)
            .map(|j| {
                let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
                let weight = |f: f64| {
                    if f < lo || f > hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                };
                let first = (lo / bin_hz).floor() as usize;
                let last = ((hi / bin_hz).ceil() as usize).min(bins - 1);
                let w = (first..=last).map(|k| weight(k as f64 * bin_hz)).collect();
                (first, w)
            })
            .collect();

        let n = MEL_FILTERS as f64;
        let dct = (0..MFCC_COEFFS)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                let mut row = [0.0; MEL_FILTERS];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = scale
                        * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / n).cos();
                }
                row
            })
            .collect();

        Self { filters, dct, bins }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Log filter energies computed from the power spectrum.
    pub fn log_energies(&self, s: &SpectralFrame) -> [f64; MEL_FILTERS] {
        assert_eq!(s.bin_count(), self.bins, "filterbank built for another FFT size");
        let mut out = [0.0; MEL_FILTERS];
        for (o, (first, weights)) in out.iter_mut().zip(&self.filters) {
            let energy: f64 = weights
                .iter()
                .zip(&s.magnitudes[*first..])
                .map(|(w, m)| w * m * m)
                .sum();
            *o = (energy + LOG_FLOOR).ln();
        }
        out
    }

    pub fn mfcc(&self, s: &SpectralFrame) -> [f64; MFCC_COEFFS] {
        let log_e = self.log_energies(s);
        let mut out = [0.0; MFCC_COEFFS];
        for (o, row) in out.iter_mut().zip(&self.dct) {
            *o = row.iter().zip(&log_e).map(|(a, b)| a * b).sum();
        }
        out
    }
}

/// Convenience wrapper that builds the filterbank on the fly.
pub fn mfcc(s: &SpectralFrame) -> [f64; MFCC_COEFFS] {
    MelFilterbank::new(s.bin_count(), s.bin_hz).mfcc(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::magnitude_spectrum;

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 100.0, 1000.0, 22_050.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-8);
        }
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.1);
    }

    #[test]
    fn zero_spectrum_only_dc_coefficient() {
        let s = SpectralFrame::new(vec![0.0; 2049], 44_100.0 / 4096.0);
        let c = mfcc(&s);
        let expected = MEL_FILTERS as f64 * LOG_FLOOR.ln() / (MEL_FILTERS as f64).sqrt();
        assert!((c[0] - expected).abs() < 1e-9);
        for &x in &c[1..] {
            assert!(x.abs() < 1e-9);
        }
    }

    #[test]
    fn gain_shifts_only_c0() {
        let n = 1024;
        let mut state = 12345u64;
        let frame: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        let g = 3.0;
        let scaled: Vec<f64> = frame.iter().map(|x| x * g).collect();
        let a = mfcc(&magnitude_spectrum(&frame, 16_000).unwrap());
        let b = mfcc(&magnitude_spectrum(&scaled, 16_000).unwrap());
        let shift = (MEL_FILTERS as f64).sqrt() * (g * g).ln();
        assert!((b[0] - a[0] - shift).abs() < 1e-6, "{} vs {}", b[0] - a[0], shift);
        for k in 1..MFCC_COEFFS {
            assert!((a[k] - b[k]).abs() < 1e-6, "c{k}");
        }
    }

    #[test]
    fn every_filter_is_bounded_by_one() {
        let fb = MelFilterbank::new(2049, 44_100.0 / 4096.0);
        for (_, w) in &fb.filters {
            assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
