//! Textbook versions of the spectral features. Everything here is written
//! from the definitions with plain loops and shares no code with the
//! optimized extractor.

use std::f64::consts::PI;

/// |X_k| for k = 0..=N/2 by the O(N^2) definition of the DFT.
pub fn naive_dft_magnitudes(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    // exact twiddles indexed by (k * t) mod n keep the error at rounding level
    let cos: Vec<f64> = (0..n).map(|m| (2.0 * PI * m as f64 / n as f64).cos()).collect();
    let sin: Vec<f64> = (0..n).map(|m| (2.0 * PI * m as f64 / n as f64).sin()).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let m = (k * t) % n;
                re += x * cos[m];
                im -= x * sin[m];
            }
            re.hypot(im)
        })
        .collect()
}

pub fn centroid(mags: &[f64], bin_hz: f64) -> f64 {
    let total: f64 = mags.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    mags.iter()
        .enumerate()
        .map(|(k, m)| k as f64 * bin_hz * m)
        .sum::<f64>()
        / total
}

pub fn rolloff(mags: &[f64], bin_hz: f64, pct: f64) -> f64 {
    let total: f64 = mags.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut cumulative = Vec::with_capacity(mags.len());
    let mut acc = 0.0;
    for m in mags {
        acc += m;
        cumulative.push(acc);
    }
    let r = cumulative
        .iter()
        .position(|&c| c >= pct * total)
        .unwrap_or(mags.len() - 1);
    r as f64 * bin_hz
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

pub fn flux(current: &[f64], previous: &[f64]) -> f64 {
    unit(current)
        .iter()
        .zip(unit(previous))
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn zero_crossings(frame: &[f64]) -> usize {
    let sign = |x: f64| if x < 0.0 { -1 } else { 1 };
    (1..frame.len())
        .filter(|&i| sign(frame[i]) != sign(frame[i - 1]))
        .count()
}

pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).ln() / std::f64::consts::LN_10
}

fn inverse_mel(m: f64) -> f64 {
    700.0 * ((m * std::f64::consts::LN_10 / 2595.0).exp() - 1.0)
}

/// 13 cepstral coefficients from 40 triangular mel filters over
/// 0..Nyquist applied to the power spectrum, then ln(E + 1e-10) and an
/// orthonormal DCT-II.
pub fn mfcc(mags: &[f64], sample_rate_hz: f64) -> Vec<f64> {
    const FILTERS: usize = 40;
    let nyquist = sample_rate_hz / 2.0;
    let bin_hz = nyquist / (mags.len() - 1) as f64;
    let top = mel(nyquist);
    let edge = |i: usize| inverse_mel(top * i as f64 / (FILTERS + 1) as f64);

    let log_energy: Vec<f64> = (0..FILTERS)
        .map(|m| {
            let (lo, peak, hi) = (edge(m), edge(m + 1), edge(m + 2));
            let energy: f64 = mags
                .iter()
                .enumerate()
                .map(|(k, x)| {
                    let f = k as f64 * bin_hz;
                    let rise = (f - lo) / (peak - lo);
                    let fall = (hi - f) / (hi - peak);
                    rise.min(fall).max(0.0) * x * x
                })
                .sum();
            (energy + 1e-10).ln()
        })
        .collect();

    (0..13)
        .map(|n| {
            let s: f64 = log_energy
                .iter()
                .enumerate()
                .map(|(m, e)| e * (PI * n as f64 * (2 * m + 1) as f64 / (2 * FILTERS) as f64).cos())
                .sum();
            let norm = if n == 0 { (1.0 / FILTERS as f64).sqrt() } else { (2.0 / FILTERS as f64).sqrt() };
            norm * s
        })
        .collect()
}

/// Mean and population standard deviation of every dimension over the last
/// `memory` rows ending at each position.
pub fn texture(rows: &[Vec<f64>], memory: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..rows.len())
        .map(|i| {
            let window = &rows[(i + 1).saturating_sub(memory)..=i];
            let n = window.len() as f64;
            let dim = rows[i].len();
            let means: Vec<f64> = (0..dim).map(|d| window.iter().map(|r| r[d]).sum::<f64>() / n).collect();
            let stds = (0..dim)
                .map(|d| (window.iter().map(|r| (r[d] - means[d]).powi(2)).sum::<f64>() / n).sqrt())
                .collect();
            (means, stds)
        })
        .collect()
}
