//! Synthetic stand-ins for hydrophone audio.
//!
//! Three sound families are generated:
//!
//! * calls: harmonic stacks whose fundamental follows one of six contour
//!   templates, each confined to its own fundamental band,
//! * voice: a glottal pulse train through three formant resonators with
//!   syllable-rate amplitude modulation, fundamental 90-230 Hz,
//! * background: low-passed ("colored") noise, sometimes with a low
//!   harmonic hum like a passing boat.
//!
//! The families separate on spectral shape: call energy sits on sparse
//! harmonics from 500 Hz up, voice energy below 3.5 kHz in formant bands
//! with a dense low harmonic comb, background is broadband and quieter.
//! The call templates are only meant to be distinguishable from each other,
//! not to imitate real call types. Rising and chirp share most of their
//! frequency range on purpose, so any confusion should fall on that pair.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use orcaclass_core::audio::{write_wav, AudioBuffer};
use orcaclass_core::dataset::{save_manifest, write_annotations, Annotation, LabelSet, ManifestEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{ExperimentError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const AUDIO_DIR: &str = "audio";

const AUTHOR: &str = "synth";

/// Timestamps are fixed so regenerated annotation files are byte-identical.
fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// One independent random stream per generated item.
fn item_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallTemplate {
    Rising,
    Falling,
    FlatHarmonic,
    TwoPart,
    Pulsed,
    Chirp,
}

impl CallTemplate {
    pub const ALL: [CallTemplate; 6] = [
        CallTemplate::Rising,
        CallTemplate::Falling,
        CallTemplate::FlatHarmonic,
        CallTemplate::TwoPart,
        CallTemplate::Pulsed,
        CallTemplate::Chirp,
    ];

    /// The pair built to overlap.
    pub const SIMILAR_PAIR: (CallTemplate, CallTemplate) = (CallTemplate::Rising, CallTemplate::Chirp);

    pub fn name(self) -> &'static str {
        match self {
            CallTemplate::Rising => "rising",
            CallTemplate::Falling => "falling",
            CallTemplate::FlatHarmonic => "flat_harmonic",
            CallTemplate::TwoPart => "two_part",
            CallTemplate::Pulsed => "pulsed",
            CallTemplate::Chirp => "chirp",
        }
    }

    pub fn label_set() -> LabelSet {
        LabelSet::new(Self::ALL.iter().map(|t| t.name())).expect("distinct names")
    }
}

/// Fundamental frequency in Hz at normalized time `u` in [0, 1].
#[derive(Debug, Clone, Copy)]
struct Contour {
    template: CallTemplate,
    a: f64,
    b: f64,
}

impl Contour {
    fn random(template: CallTemplate, rng: &mut impl Rng) -> Self {
        let (a, b) = match template {
            CallTemplate::Rising => (rng.random_range(560.0..660.0), rng.random_range(1150.0..1300.0)),
            CallTemplate::Chirp => (rng.random_range(560.0..660.0), rng.random_range(1150.0..1300.0)),
            CallTemplate::Falling => (rng.random_range(1900.0..2100.0), rng.random_range(1000.0..1150.0)),
            CallTemplate::FlatHarmonic => (rng.random_range(850.0..950.0), 0.0),
            CallTemplate::TwoPart => (rng.random_range(1400.0..1550.0), rng.random_range(2300.0..2500.0)),
            CallTemplate::Pulsed => (rng.random_range(1150.0..1250.0), rng.random_range(14.0..24.0)),
        };
        Self { template, a, b }
    }

    fn f0(&self, u: f64) -> f64 {
        match self.template {
            CallTemplate::Rising | CallTemplate::Falling => self.a + (self.b - self.a) * u,
            CallTemplate::Chirp => self.a * (self.b / self.a).powf(u),
            CallTemplate::FlatHarmonic | CallTemplate::Pulsed => self.a * (1.0 + 0.01 * (TAU * 5.0 * u).sin()),
            CallTemplate::TwoPart => {
                if u < 0.5 {
                    self.a
                } else {
                    self.b
                }
            }
        }
    }

    fn harmonics(&self) -> usize {
        match self.template {
            CallTemplate::FlatHarmonic => 10,
            _ => 6,
        }
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn scale_to_rms(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

/// Raised-cosine fade in and out.
fn envelope(n: usize, attack: f64, release: f64) -> Vec<f64> {
    let a = ((attack * n as f64) as usize).max(1);
    let r = ((release * n as f64) as usize).max(1);
    (0..n)
        .map(|i| {
            if i < a {
                0.5 - 0.5 * (PI * i as f64 / a as f64).cos()
            } else if i + r > n {
                0.5 - 0.5 * (PI * (n - i) as f64 / r as f64).cos()
            } else {
                1.0
            }
        })
        .collect()
}

/// Unit-RMS call of `n` samples.
pub fn call(template: CallTemplate, n: usize, sr: f64, rng: &mut impl Rng) -> Vec<f64> {
    let contour = Contour::random(template, rng);
    let tilt = rng.random_range(0.8..1.2);
    let mut phase = rng.random_range(0.0..TAU);
    let env = envelope(n, 0.05, 0.1);
    let mut out = Vec::with_capacity(n);
    for (i, e) in env.iter().enumerate() {
        let u = i as f64 / n as f64;
        let f0 = contour.f0(u);
        phase = (phase + TAU * f0 / sr) % TAU;
        let mut s = 0.0;
        for h in 1..=contour.harmonics() {
            if h as f64 * f0 > 0.4 * sr {
                break;
            }
            s += (h as f64 * phase).sin() / (h as f64).powf(tilt);
        }
        if template == CallTemplate::Pulsed {
            let p = 0.5 + 0.5 * (TAU * contour.b * i as f64 / sr).sin();
            s *= p * p;
        }
        out.push(s * e);
    }
    scale_to_rms(&mut out, 1.0);
    out
}

/// Two-pole resonator `y[n] = x[n] + 2 r cos(w) y[n-1] - r^2 y[n-2]`.
fn resonate(x: &mut [f64], freq: f64, bandwidth: f64, sr: f64) {
    let r = (-PI * bandwidth / sr).exp();
    let c1 = 2.0 * r * (TAU * freq / sr).cos();
    let c2 = -r * r;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = *v + c1 * y1 + c2 * y2;
        y2 = y1;
        y1 = y;
        *v = y * (1.0 - r);
    }
}

const VOWELS: [(f64, f64, f64); 5] = [
    (730.0, 1090.0, 2440.0),
    (530.0, 1840.0, 2480.0),
    (270.0, 2290.0, 3010.0),
    (570.0, 840.0, 2410.0),
    (300.0, 870.0, 2240.0),
];

/// Unit-RMS voice-like signal of `n` samples.
pub fn voice(n: usize, sr: f64, rng: &mut impl Rng) -> Vec<f64> {
    let f0_base = rng.random_range(90.0..230.0);
    let syllable_rate = rng.random_range(3.0..6.0);
    let syllable_len = (sr / syllable_rate) as usize;
    let mut out = vec![0.0; n];
    let mut start = 0;
    let mut phase: f64 = 0.0;
    while start < n {
        let len = syllable_len.min(n - start);
        let (f1, f2, f3) = VOWELS[rng.random_range(0..VOWELS.len())];
        let jitter = rng.random_range(0.9..1.1);
        let mut seg = vec![0.0; len];
        for (i, s) in seg.iter_mut().enumerate() {
            let t = (start + i) as f64 / sr;
            let f0 = f0_base * (1.0 + 0.08 * (TAU * 0.7 * t).sin());
            let next = phase + f0 / sr;
            if next.floor() > phase.floor() {
                *s += 1.0;
            }
            phase = next;
            *s += 0.02 * rng.sample::<f64, _>(StandardNormal);
        }
        let bands = [(f1 * jitter, 90.0), (f2 * jitter, 120.0), (f3 * jitter, 170.0)];
        let mut mixed = vec![0.0; len];
        for (gain, (f, bw)) in [1.0, 0.5, 0.25].iter().zip(bands) {
            let mut b = seg.clone();
            resonate(&mut b, f, bw, sr);
            resonate(&mut b, f, bw, sr);
            mixed.iter_mut().zip(&b).for_each(|(m, v)| *m += gain * v);
        }
        // syllable shape with a short pause at the end
        let voiced = (len as f64 * rng.random_range(0.65..0.85)) as usize;
        for (i, m) in mixed.iter_mut().enumerate() {
            *m *= if i < voiced { (PI * i as f64 / voiced as f64).sin().powf(0.7) } else { 0.0 };
        }
        out[start..start + len].copy_from_slice(&mixed);
        start += len;
    }
    scale_to_rms(&mut out, 1.0);
    out
}

/// Unit-RMS background: one-pole low-passed noise plus an optional low
/// harmonic hum.
pub fn background(n: usize, sr: f64, rng: &mut impl Rng) -> Vec<f64> {
    let pole = rng.random_range(0.6..0.97);
    let mut y = 0.0;
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            y = pole * y + (1.0 - pole) * w;
            y + 0.05 * (1.0 - pole) * w
        })
        .collect();
    scale_to_rms(&mut out, 1.0);
    if rng.random_bool(0.5) {
        let hum_f = rng.random_range(40.0..120.0);
        let level = rng.random_range(0.2..0.6);
        let mut hum: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                (1..=6).map(|h| (TAU * hum_f * h as f64 * t).sin() / h as f64).sum::<f64>()
                    * (1.0 + 0.2 * (TAU * 0.3 * t).sin())
            })
            .collect();
        scale_to_rms(&mut hum, level);
        out.iter_mut().zip(&hum).for_each(|(o, h)| *o += h);
        scale_to_rms(&mut out, 1.0);
    }
    out
}

/// Adds `noise` scaled so that `signal` sits `snr_db` above it.
fn mix(signal: &mut [f64], noise: &[f64], snr_db: f64) {
    let g = rms(signal) / rms(noise).max(1e-300) / 10f64.powf(snr_db / 20.0);
    signal.iter_mut().zip(noise).for_each(|(s, n)| *s += g * n);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    /// orca / background / voice clips.
    ThreeClass,
    /// One class per call template.
    Calls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub kind: CorpusKind,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub clips_per_class: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub min_snr_db: f64,
    pub max_snr_db: f64,
    /// RMS of event signals before background is added.
    pub event_rms: f64,
    /// RMS range of pure background.
    pub background_rms: (f64, f64),
}

impl SyntheticCorpusSpec {
    pub fn three_class(clips_per_class: usize, seed: u64) -> Self {
        Self {
            kind: CorpusKind::ThreeClass,
            seed,
            sample_rate_hz: orcaclass_core::DEFAULT_SAMPLE_RATE_HZ,
            clips_per_class,
            min_duration_s: 1.0,
            max_duration_s: 2.0,
            min_snr_db: 10.0,
            max_snr_db: 20.0,
            event_rms: 0.1,
            background_rms: (0.01, 0.03),
        }
    }

    pub fn calls(clips_per_class: usize, seed: u64) -> Self {
        Self {
            kind: CorpusKind::Calls,
            ..Self::three_class(clips_per_class, seed)
        }
    }

    pub fn label_set(&self) -> LabelSet {
        match self.kind {
            CorpusKind::ThreeClass => LabelSet::three_class(),
            CorpusKind::Calls => CallTemplate::label_set(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.clips_per_class > 0
            && self.sample_rate_hz >= 8000
            && self.min_duration_s > 0.0
            && self.max_duration_s >= self.min_duration_s
            && self.max_snr_db >= self.min_snr_db
            && self.event_rms > 0.0
            && self.background_rms.0 > 0.0
            && self.background_rms.1 >= self.background_rms.0;
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::InvalidSpec(format!("{self:?}")))
        }
    }

    /// Label and samples of clip `index`.
    pub fn clip(&self, index: usize) -> (String, Vec<f64>) {
        let labels = self.label_set();
        let class = index % labels.len();
        let label = labels.name(class).expect("class in range").to_string();
        let mut rng = item_rng(self.seed, index as u64);
        let sr = self.sample_rate_hz as f64;
        let n = (rng.random_range(self.min_duration_s..=self.max_duration_s) * sr) as usize;
        let snr = rng.random_range(self.min_snr_db..=self.max_snr_db);
        let bg_level = rng.random_range(self.background_rms.0..=self.background_rms.1);

        let event = match (self.kind, label.as_str()) {
            (CorpusKind::ThreeClass, "background") => None,
            (CorpusKind::ThreeClass, "voice") => Some(voice(n, sr, &mut rng)),
            (CorpusKind::ThreeClass, _) => {
                let t = CallTemplate::ALL[rng.random_range(0..CallTemplate::ALL.len())];
                Some(call(t, n, sr, &mut rng))
            }
            (CorpusKind::Calls, _) => Some(call(CallTemplate::ALL[class], n, sr, &mut rng)),
        };
        let mut bg = background(n, sr, &mut rng);
        let samples = match event {
            None => {
                scale_to_rms(&mut bg, bg_level);
                bg
            }
            Some(mut e) => {
                scale_to_rms(&mut e, self.event_rms);
                mix(&mut e, &bg, snr);
                e
            }
        };
        (label, clamp_peak(samples))
    }
}

/// Keeps 16-bit output from clipping.
fn clamp_peak(mut x: Vec<f64>) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.95 {
        x.iter_mut().for_each(|v| *v *= 0.95 / peak);
    }
    x
}

/// Paths of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCorpus {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub annotations: PathBuf,
    pub label_set: LabelSet,
    pub entries: Vec<ManifestEntry>,
    pub annotation_records: Vec<Annotation>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_corpus(
    out_dir: &Path,
    label_set: LabelSet,
    items: Vec<(String, AudioBuffer, Vec<Annotation>)>,
) -> Result<GeneratedCorpus> {
    let audio_dir = out_dir.join(AUDIO_DIR);
    std::fs::create_dir_all(&audio_dir).map_err(io_err(&audio_dir))?;
    let mut entries = Vec::with_capacity(items.len());
    let mut annotations = Vec::new();
    for (id, buffer, anns) in &items {
        let rel = PathBuf::from(AUDIO_DIR).join(format!("{id}.wav"));
        write_wav(&out_dir.join(&rel), buffer)?;
        entries.push(ManifestEntry {
            recording_id: id.clone(),
            path: rel,
            duration_s: buffer.duration_s(),
        });
        annotations.extend(anns.iter().cloned());
    }
    let manifest = out_dir.join(MANIFEST_FILE);
    save_manifest(&manifest, &entries)?;
    let ann_path = out_dir.join(ANNOTATIONS_FILE);
    write_annotations(&ann_path, &annotations)?;
    let entries = entries
        .into_iter()
        .map(|mut e| {
            e.path = out_dir.join(e.path);
            e
        })
        .collect();
    Ok(GeneratedCorpus {
        root: out_dir.to_path_buf(),
        manifest,
        annotations: ann_path,
        label_set,
        entries,
        annotation_records: annotations,
    })
}

/// Writes one WAV per clip plus the manifest and a ground-truth annotation
/// covering each whole clip. Clips cycle through the classes so the corpus
/// is balanced.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec, out_dir: &Path) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let labels = spec.label_set();
    let total = spec.clips_per_class * labels.len();
    let items = (0..total)
        .into_par_iter()
        .map(|i| {
            let (label, samples) = spec.clip(i);
            let id = format!("clip-{i:04}");
            let buffer = AudioBuffer::new(samples, spec.sample_rate_hz)?;
            let ann = Annotation {
                id: format!("{id}-gt"),
                recording_id: id.clone(),
                start_s: 0.0,
                end_s: buffer.duration_s(),
                label,
                author: AUTHOR.into(),
                created_at: epoch(),
            };
            Ok((id, buffer, vec![ann]))
        })
        .collect::<Result<Vec<_>>>()?;
    write_corpus(out_dir, labels, items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRecordingSpec {
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub recordings: usize,
    pub duration_s: f64,
    /// Events (calls or voice notes) inserted per recording.
    pub events: (usize, usize),
    pub event_duration_s: (f64, f64),
    /// Event level relative to the background.
    pub snr_db: (f64, f64),
    pub background_rms: f64,
}

impl LongRecordingSpec {
    pub fn new(recordings: usize, duration_s: f64, seed: u64) -> Self {
        Self {
            seed,
            sample_rate_hz: orcaclass_core::DEFAULT_SAMPLE_RATE_HZ,
            recordings,
            duration_s,
            events: (2, 5),
            event_duration_s: (1.5, 4.0),
            snr_db: (10.0, 20.0),
            background_rms: 0.02,
        }
    }

    /// Samples and ground-truth regions `(start_s, end_s, label)` of
    /// recording `index`, background regions included.
    pub fn recording(&self, index: usize) -> (Vec<f64>, Vec<(f64, f64, &'static str)>) {
        let mut rng = item_rng(self.seed ^ 0x5eed_0f10, index as u64);
        let sr = self.sample_rate_hz as f64;
        let n = (self.duration_s * sr) as usize;
        let mut out = background(n, sr, &mut rng);
        scale_to_rms(&mut out, self.background_rms);

        let count = rng.random_range(self.events.0..=self.events.1);
        // spread events over equal slots so they never overlap
        let slot = n / count.max(1);
        let mut regions = Vec::new();
        let mut cursor = 0usize;
        for k in 0..count {
            let max_len = (slot as f64 * 0.7) as usize;
            let len = ((rng.random_range(self.event_duration_s.0..=self.event_duration_s.1) * sr) as usize).min(max_len);
            if len < (0.5 * sr) as usize {
                continue;
            }
            let start = k * slot + rng.random_range(0..=(slot - len) / 2 + 1).min(slot - len);
            let is_call = rng.random_bool(0.6);
            let mut event = if is_call {
                let t = CallTemplate::ALL[rng.random_range(0..CallTemplate::ALL.len())];
                call(t, len, sr, &mut rng)
            } else {
                voice(len, sr, &mut rng)
            };
            let snr = rng.random_range(self.snr_db.0..=self.snr_db.1);
            let g = self.background_rms * 10f64.powf(snr / 20.0);
            event.iter_mut().for_each(|v| *v *= g);
            out[start..start + len].iter_mut().zip(&event).for_each(|(o, e)| *o += e);
            if start > cursor {
                regions.push((cursor as f64 / sr, start as f64 / sr, "background"));
            }
            regions.push((start as f64 / sr, (start + len) as f64 / sr, if is_call { "orca" } else { "voice" }));
            cursor = start + len;
        }
        if cursor < n {
            regions.push((cursor as f64 / sr, n as f64 / sr, "background"));
        }
        (clamp_peak(out), regions)
    }
}

/// Long background recordings with calls and voice notes inserted, plus
/// ground-truth annotations for every region.
pub fn generate_long_recordings(spec: &LongRecordingSpec, out_dir: &Path) -> Result<GeneratedCorpus> {
    if spec.recordings == 0 || !(spec.duration_s >= 2.0) || spec.events.1 < spec.events.0 {
        return Err(ExperimentError::InvalidSpec(format!("{spec:?}")));
    }
    let items = (0..spec.recordings)
        .into_par_iter()
        .map(|i| {
            let (samples, regions) = spec.recording(i);
            let id = format!("rec-{i:04}");
            let buffer = AudioBuffer::new(samples, spec.sample_rate_hz)?;
            let anns = regions
                .iter()
                .enumerate()
                .map(|(k, (s, e, l))| Annotation {
                    id: format!("{id}-gt-{k:02}"),
                    recording_id: id.clone(),
                    start_s: *s,
                    end_s: *e,
                    label: l.to_string(),
                    author: AUTHOR.into(),
                    created_at: epoch(),
                })
                .collect();
            Ok((id, buffer, anns))
        })
        .collect::<Result<Vec<_>>>()?;
    write_corpus(out_dir, LabelSet::three_class(), items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signals_have_unit_rms_and_no_nans() {
        let mut rng = item_rng(1, 0);
        for t in CallTemplate::ALL {
            let c = call(t, 22_050, 44_100.0, &mut rng);
            assert!((rms(&c) - 1.0).abs() < 1e-9);
        }
        assert!((rms(&voice(44_100, 44_100.0, &mut rng)) - 1.0).abs() < 1e-9);
        let b = background(44_100, 44_100.0, &mut rng);
        assert!(b.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn clips_are_deterministic_and_balanced() {
        let spec = SyntheticCorpusSpec::three_class(2, 9);
        assert_eq!(spec.clip(4), spec.clip(4));
        let labels: Vec<String> = (0..6).map(|i| spec.clip(i).0).collect();
        assert_eq!(labels, vec!["orca", "background", "voice", "orca", "background", "voice"]);
        let calls = SyntheticCorpusSpec::calls(1, 9);
        assert_eq!(calls.clip(5).0, "chirp");
    }

    #[test]
    fn long_recording_regions_tile_the_recording() {
        let spec = LongRecordingSpec::new(1, 20.0, 3);
        let (samples, regions) = spec.recording(0);
        assert_eq!(samples.len(), 20 * 44_100);
        assert_eq!(regions[0].0, 0.0);
        assert!((regions.last().unwrap().1 - 20.0).abs() < 1e-9);
        for w in regions.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert!(regions.iter().any(|r| r.2 != "background"));
    }

    #[test]
    fn bad_spec_is_rejected() {
        let mut spec = SyntheticCorpusSpec::three_class(0, 1);
        assert!(spec.validate().is_err());
        spec.clips_per_class = 1;
        spec.min_duration_s = 3.0;
        assert!(spec.validate().is_err());
    }
}
