//! Reference implementations and the randomized suites that compare the
//! optimized pipeline against them.
//!
//! The functions in [`dsp`] and [`qp`] only use the standard library; the
//! suites below generate random inputs, run both sides and report the worst
//! disagreement. [`contract`] drives the HTTP API from the outside.

pub mod contract;
pub mod dsp;
pub mod qp;

use std::time::{Duration, Instant};

use orcaclass_core::classifier::{train_binary_smo, Kernel, SmoParams};
use orcaclass_core::features::{self, FeatureExtractor, FrameSpec, MelFilterbank, SpectralFrame, WindowFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FFT_REL_TOL: f64 = 1e-9;
pub const SCALAR_TOL: f64 = 1e-12;
pub const MFCC_TOL: f64 = 1e-6;
pub const OBJECTIVE_TOL: f64 = 1e-3;

const SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Clone, Default)]
pub struct DspReport {
    pub frames: usize,
    /// max_k |fft - dft| / max_k |dft|, worst frame.
    pub fft_rel: f64,
    pub centroid_rel: f64,
    pub rolloff_rel: f64,
    pub flux_abs: f64,
    pub mfcc_abs: f64,
    pub zcr_mismatches: usize,
    /// Whole-extractor features against the oracle chain (window, DFT,
    /// features); looser because the two spectra differ by FFT rounding.
    pub pipeline_rel: f64,
    pub elapsed: Duration,
}

impl DspReport {
    pub fn passes(&self) -> bool {
        self.frames >= 100
            && self.fft_rel <= FFT_REL_TOL
            && self.centroid_rel <= SCALAR_TOL
            && self.rolloff_rel <= SCALAR_TOL
            && self.flux_abs <= SCALAR_TOL
            && self.mfcc_abs <= MFCC_TOL
            && self.zcr_mismatches == 0
            && self.pipeline_rel <= 1e-8
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Sum of a few random partials, noise and a DC offset; every tenth frame
/// is silent so the zero-spectrum branches are exercised too.
pub fn random_frame(rng: &mut impl Rng, n: usize, index: usize) -> Vec<f64> {
    if index % 10 == 9 {
        return vec![0.0; n];
    }
    let partials: Vec<(f64, f64, f64)> = (0..rng.random_range(1..5))
        .map(|_| {
            (
                rng.random_range(20.0..20_000.0),
                rng.random_range(0.01..1.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let noise = rng.random_range(0.0..0.3);
    let dc = rng.random_range(-0.1..0.1);
    (0..n)
        .map(|t| {
            let time = t as f64 / SAMPLE_RATE as f64;
            partials
                .iter()
                .map(|(f, a, p)| a * (std::f64::consts::TAU * f * time + p).sin())
                .sum::<f64>()
                + noise * rng.random_range(-1.0..1.0)
                + dc
        })
        .collect()
}

pub fn dsp_suite(seed: u64, frames: usize) -> DspReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DspReport {
        frames,
        ..DspReport::default()
    };
    let sizes = [256usize, 512, 1024, 2048, 4096];
    let mut previous: Option<Vec<f64>> = None;
    let mut extractors: Vec<(usize, FeatureExtractor, Vec<f64>)> = Vec::new();

    for i in 0..frames {
        let n = sizes[i % sizes.len()];
        let frame = random_frame(&mut rng, n, i);

        // FFT against the direct DFT
        let oracle_mags = dsp::naive_dft_magnitudes(&frame);
        let fast = features::magnitude_spectrum(&frame, SAMPLE_RATE).expect("power-of-two frame");
        let scale = oracle_mags.iter().fold(0.0f64, |m, v| m.max(*v));
        let diff = fast
            .magnitudes
            .iter()
            .zip(&oracle_mags)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if scale > 0.0 {
            report.fft_rel = report.fft_rel.max(diff / scale);
        } else {
            report.fft_rel = report.fft_rel.max(diff);
        }

        // scalar features on identical magnitudes
        let bin_hz = SAMPLE_RATE as f64 / n as f64;
        let s = SpectralFrame::new(oracle_mags.clone(), bin_hz);
        report.centroid_rel = report
            .centroid_rel
            .max(rel(features::centroid(&s), dsp::centroid(&oracle_mags, bin_hz)));
        for pct in [0.5, 0.85, 0.95] {
            report.rolloff_rel = report
                .rolloff_rel
                .max(rel(features::rolloff(&s, pct), dsp::rolloff(&oracle_mags, bin_hz, pct)));
        }
        if let Some(prev) = previous.as_ref().filter(|p| p.len() == oracle_mags.len()) {
            let p = SpectralFrame::new(prev.clone(), bin_hz);
            let got = features::flux(&s, &p).expect("equal bins");
            report.flux_abs = report.flux_abs.max((got - dsp::flux(&oracle_mags, prev)).abs());
        }
        let got = MelFilterbank::new(oracle_mags.len(), bin_hz).mfcc(&s);
        let want = dsp::mfcc(&oracle_mags, SAMPLE_RATE as f64);
        for (a, b) in got.iter().zip(&want) {
            report.mfcc_abs = report.mfcc_abs.max((a - b).abs());
        }
        if features::zero_crossings(&frame) != dsp::zero_crossings(&frame) {
            report.zcr_mismatches += 1;
        }

        // the whole per-frame extractor, carrying flux state per size
        let slot = match extractors.iter().position(|(size, _, _)| *size == n) {
            Some(p) => p,
            None => {
                let spec = FrameSpec::new(n, n / 2, WindowFunction::Hamming).expect("valid spec");
                let ex = FeatureExtractor::new(spec, SAMPLE_RATE).expect("valid extractor");
                extractors.push((n, ex, vec![0.0; n / 2 + 1]));
                extractors.len() - 1
            }
        };
        let (_, ex, prev_windowed) = &mut extractors[slot];
        let fv = ex.process_frame(&frame).expect("frame of window length");
        let windowed: Vec<f64> = frame.iter().zip(dsp::hamming(n)).map(|(x, w)| x * w).collect();
        let wm = dsp::naive_dft_magnitudes(&windowed);
        let expected = [
            dsp::centroid(&wm, bin_hz),
            dsp::flux(&wm, prev_windowed),
            dsp::zero_crossings(&frame) as f64,
        ];
        let got = [fv.centroid_hz, fv.flux, fv.zcr];
        for (a, b) in got.iter().zip(&expected) {
            report.pipeline_rel = report.pipeline_rel.max(rel(*a, *b));
        }
        for (a, b) in fv.mfcc.iter().zip(dsp::mfcc(&wm, SAMPLE_RATE as f64)) {
            report.pipeline_rel = report.pipeline_rel.max(rel(*a, b));
        }
        *prev_windowed = wm;

        previous = Some(oracle_mags);
    }
    report.elapsed = start.elapsed();
    report
}

#[derive(Debug, Clone)]
pub struct SvmCase {
    pub points: usize,
    pub dim: usize,
    pub c: f64,
    pub smo_objective: f64,
    pub oracle_objective: f64,
    pub max_kkt: f64,
    pub equality_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SvmReport {
    pub tol: f64,
    pub cases: Vec<SvmCase>,
    pub max_objective_gap: f64,
    pub max_kkt: f64,
    /// 4-point XOR: (grid optimum, SMO objective, training accuracy).
    pub xor: (f64, f64, f64),
    pub elapsed: Duration,
}

impl SvmReport {
    pub fn passes(&self) -> bool {
        let (grid, smo, acc) = self.xor;
        self.cases.len() >= 20
            && self.max_objective_gap <= OBJECTIVE_TOL
            && self.max_kkt <= self.tol
            && self.cases.iter().all(|c| c.converged && c.equality_residual <= self.tol)
            && (grid - smo).abs() <= OBJECTIVE_TOL
            && acc <= 0.75
    }
}

fn check_case(x: &[Vec<f64>], y: &[f64], params: &SmoParams) -> SvmCase {
    let svm = train_binary_smo(x, y, params).expect("both classes present");
    let k = qp::linear_gram(x);
    let a = svm.full_alphas(x.len());
    let (best, _) = qp::exhaustive(&k, y, params.c);
    let kkt = qp::kkt_residuals(&k, y, &a, svm.bias, params.c);
    SvmCase {
        points: x.len(),
        dim: x[0].len(),
        c: params.c,
        smo_objective: qp::dual_objective(&k, y, &a),
        oracle_objective: best,
        max_kkt: kkt.iter().fold(0.0f64, |m, v| m.max(*v)),
        equality_residual: a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs(),
        converged: svm.converged,
    }
}

/// Random problems of 4..=12 points in 1..=3 dimensions with labels that
/// are only partly explained by a random hyperplane, so most problems have
/// bounded multipliers as well as free ones.
pub fn svm_suite(seed: u64, problems: usize) -> SvmReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = SmoParams::default();
    let mut report = SvmReport {
        tol: params.tol,
        ..SvmReport::default()
    };
    let cs = [0.1, 1.0, 10.0];
    while report.cases.len() < problems {
        let n = rng.random_range(4..=12);
        let d = rng.random_range(1..=3);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let flip = rng.random_range(0.0..0.3);
        let y: Vec<f64> = x
            .iter()
            .map(|p| {
                let side = p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() >= 0.0;
                if side ^ rng.random_bool(flip) { 1.0 } else { -1.0 }
            })
            .collect();
        if !(y.contains(&1.0) && y.contains(&-1.0)) {
            continue;
        }
        let c = cs[report.cases.len() % cs.len()];
        report.cases.push(check_case(&x, &y, &SmoParams { c, ..params }));
    }
    for case in &report.cases {
        report.max_objective_gap = report
            .max_objective_gap
            .max((case.smo_objective - case.oracle_objective).abs());
        report.max_kkt = report.max_kkt.max(case.max_kkt);
    }

    let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let y = vec![1.0, 1.0, -1.0, -1.0];
    let svm = train_binary_smo(&x, &y, &params).expect("two classes");
    let k = qp::linear_gram(&x);
    let grid = qp::grid_four_points(&k, &y, params.c, 100);
    let smo = qp::dual_objective(&k, &y, &svm.full_alphas(4));
    let correct = x
        .iter()
        .zip(&y)
        .filter(|(p, &t)| (svm.decision_value(p) >= 0.0) == (t > 0.0))
        .count();
    report.xor = (grid, smo, correct as f64 / 4.0);
    debug_assert!(matches!(params.kernel, Kernel::Linear));

    report.elapsed = start.elapsed();
    report
}
