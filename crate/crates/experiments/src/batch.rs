//! Batch segmentation of a corpus by a pool of worker threads, with
//! end-to-end timing.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::mpsc;
use std::time::Instant;

use orcaclass_core::classifier::SvmModel;
use orcaclass_core::dataset::ManifestEntry;
use orcaclass_core::segmenter::{segment_wav, SegmentOptions, SegmentTimeline};
use serde::{Deserialize, Serialize};

use crate::{ExperimentError, Result};

/// Number of recordings a fraction of `n` selects: `ceil(fraction * n)`,
/// at least one.
pub fn selected_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// Item `i` goes to worker `i % workers`.
pub fn partition_round_robin(n: usize, workers: usize) -> Vec<Vec<usize>> {
    let mut parts = vec![Vec::new(); workers.max(1)];
    for i in 0..n {
        parts[i % workers.max(1)].push(i);
    }
    parts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub workers: usize,
    pub fraction: f64,
    /// Per-recording JSON and CSV timelines go here when set.
    pub out_dir: Option<PathBuf>,
    pub options: SegmentOptions,
    /// Seconds of training audio behind the model, reported alongside the
    /// timing.
    pub training_len_s: f64,
}

impl BatchConfig {
    pub fn new(workers: usize, fraction: f64) -> Self {
        Self {
            workers,
            fraction,
            out_dir: None,
            options: SegmentOptions::default(),
            training_len_s: 0.0,
        }
    }

    fn validate(&self, entries: &[ManifestEntry]) -> Result<()> {
        if entries.is_empty() {
            return Err(ExperimentError::NoFiles);
        }
        if self.workers == 0 || !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(ExperimentError::InvalidSpec(format!(
                "need workers >= 1 and 0 < fraction <= 1 (got {} and {})",
                self.workers, self.fraction
            )));
        }
        Ok(())
    }
}

/// Which recordings each worker would process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub fraction: f64,
    pub workers: Vec<Vec<String>>,
}

pub fn plan_batch(entries: &[ManifestEntry], cfg: &BatchConfig) -> Result<BatchPlan> {
    cfg.validate(entries)?;
    let n = selected_count(entries.len(), cfg.fraction);
    Ok(BatchPlan {
        fraction: cfg.fraction,
        workers: partition_round_robin(n, cfg.workers)
            .into_iter()
            .map(|p| p.into_iter().map(|i| entries[i].recording_id.clone()).collect())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingOutcome {
    pub recording_id: String,
    pub worker: usize,
    pub segments: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub training_len_s: f64,
    pub corpus_fraction: f64,
    pub worker_count: usize,
    pub files: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub timing: TimingRow,
    pub recordings: Vec<RecordingOutcome>,
    /// Successful timelines in manifest order.
    pub timelines: Vec<SegmentTimeline>,
}

/// Segments the first `ceil(fraction * N)` recordings. Workers take their
/// round-robin share in order and send results to this thread, which alone
/// writes output files. Failed recordings are logged and skipped; the run
/// is an error only when every recording fails.
pub fn run_batch(entries: &[ManifestEntry], model: &SvmModel, cfg: &BatchConfig) -> Result<BatchOutcome> {
    cfg.validate(entries)?;
    if model.features.is_none() {
        return Err(orcaclass_core::segmenter::SegmenterError::NoFeatureConfig.into());
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let n = selected_count(entries.len(), cfg.fraction);
    let parts = partition_round_robin(n, cfg.workers);

    let start = Instant::now();
    let mut slots: Vec<Option<(usize, std::result::Result<SegmentTimeline, String>)>> = vec![None; n];
    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel();
        for (w, part) in parts.iter().enumerate() {
            let tx = tx.clone();
            scope.spawn(move || {
                for &i in part {
                    let e = &entries[i];
                    let result = segment_wav(&e.path, &e.recording_id, model, &cfg.options).map_err(|err| err.to_string());
                    if tx.send((i, w, result)).is_err() {
                        return;
                    }
                }
            });
        }
        drop(tx);
        for (i, w, result) in rx {
            if let (Some(dir), Ok(t)) = (&cfg.out_dir, &result) {
                t.write_files(&dir.join(format!("{}.json", entries[i].recording_id)))?;
            }
            slots[i] = Some((w, result));
        }
        Ok(())
    })?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut recordings = Vec::with_capacity(n);
    let mut timelines = Vec::with_capacity(n);
    for (i, slot) in slots.into_iter().enumerate() {
        let (worker, result) = slot.expect("every selected recording reports back");
        let recording_id = entries[i].recording_id.clone();
        match result {
            Ok(t) => {
                recordings.push(RecordingOutcome {
                    recording_id,
                    worker,
                    segments: Some(t.segments.len()),
                    error: None,
                });
                timelines.push(t);
            }
            Err(e) => {
                log::warn!("segmenting {recording_id} failed: {e}");
                recordings.push(RecordingOutcome {
                    recording_id,
                    worker,
                    segments: None,
                    error: Some(e),
                });
            }
        }
    }
    if timelines.is_empty() {
        return Err(ExperimentError::AllFailed(n));
    }
    Ok(BatchOutcome {
        timing: TimingRow {
            training_len_s: cfg.training_len_s,
            corpus_fraction: cfg.fraction,
            worker_count: cfg.workers,
            files: n,
            wall_time_s,
        },
        recordings,
        timelines,
    })
}

/// `dd:hh:mm:ss`, seconds rounded to the nearest whole second.
pub fn format_dhms(seconds: f64) -> String {
    let total = seconds.max(0.0).round() as u64;
    let (d, rest) = (total / 86_400, total % 86_400);
    format!("{:02}:{:02}:{:02}:{:02}", d, rest / 3600, rest % 3600 / 60, rest % 60)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("training (s)  % of corpus  workers  files  run time (d:h:m:s)  seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>12}  {:>11}  {:>7}  {:>5}  {:>18}  {:>7.3}",
                r.training_len_s,
                100.0 * r.corpus_fraction,
                r.worker_count,
                r.files,
                format_dhms(r.wall_time_s),
                r.wall_time_s
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("training_len_s,corpus_fraction,worker_count,files,wall_time_s,run_time\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.training_len_s,
                r.corpus_fraction,
                r.worker_count,
                r.files,
                r.wall_time_s,
                format_dhms(r.wall_time_s)
            );
        }
        out
    }

    /// Reads what [`TimingReport::to_csv`] writes. Several files may be
    /// concatenated; repeated header lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("training_len_s") {
                continue;
            }
            let bad = || ExperimentError::InvalidSpec(format!("timing csv line {}: {line:?}", n + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 5 {
                return Err(bad());
            }
            rows.push(TimingRow {
                training_len_s: f[0].parse().map_err(|_| bad())?,
                corpus_fraction: f[1].parse().map_err(|_| bad())?,
                worker_count: f[2].parse().map_err(|_| bad())?,
                files: f[3].parse().map_err(|_| bad())?,
                wall_time_s: f[4].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPair {
    pub worker_count: usize,
    pub small_fraction: f64,
    pub large_fraction: f64,
    pub fraction_ratio: f64,
    pub time_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    /// Allowed multiplicative deviation of a time ratio from its fraction
    /// ratio.
    pub factor: f64,
    pub pairs: Vec<ScalingPair>,
    pub pass: bool,
}

pub const SCALING_FACTOR: f64 = 1.5;

/// Compares every pair of fractions run with the same worker count: the
/// wall-time ratio must be within a factor of 1.5 of the fraction ratio.
pub fn scaling_check(report: &TimingReport) -> Result<ScalingCheck> {
    let mut pairs = Vec::new();
    let mut workers: Vec<usize> = report.rows.iter().map(|r| r.worker_count).collect();
    workers.sort_unstable();
    workers.dedup();
    for w in workers {
        let rows: Vec<&TimingRow> = report.rows.iter().filter(|r| r.worker_count == w).collect();
        for (i, a) in rows.iter().enumerate() {
            for b in &rows[i + 1..] {
                if a.corpus_fraction == b.corpus_fraction {
                    continue;
                }
                let (s, l) = if a.corpus_fraction < b.corpus_fraction { (a, b) } else { (b, a) };
                if !(s.wall_time_s > 0.0) {
                    return Err(ExperimentError::InvalidSpec("wall times must be positive".into()));
                }
                let fraction_ratio = l.corpus_fraction / s.corpus_fraction;
                let time_ratio = l.wall_time_s / s.wall_time_s;
                let q = time_ratio / fraction_ratio;
                pairs.push(ScalingPair {
                    worker_count: w,
                    small_fraction: s.corpus_fraction,
                    large_fraction: l.corpus_fraction,
                    fraction_ratio,
                    time_ratio,
                    pass: (1.0 / SCALING_FACTOR..=SCALING_FACTOR).contains(&q),
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(ExperimentError::InsufficientRows);
    }
    let pass = pairs.iter().all(|p| p.pass);
    Ok(ScalingCheck {
        factor: SCALING_FACTOR,
        pairs,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(fraction: f64, t: f64) -> TimingRow {
        TimingRow {
            training_len_s: 30.0,
            corpus_fraction: fraction,
            worker_count: 1,
            files: 0,
            wall_time_s: t,
        }
    }

    #[test]
    fn partitions() {
        let p = partition_round_robin(10, 3);
        assert_eq!(p.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
        assert_eq!(p[1], vec![1, 4, 7]);
        assert_eq!(selected_count(100, 0.1), 10);
        assert_eq!(selected_count(100, 0.01), 1);
        assert_eq!(selected_count(100, 1.0), 100);
        assert_eq!(selected_count(7, 0.5), 4);
    }

    #[test]
    fn timing_csv_round_trip() {
        let r = TimingReport {
            rows: vec![row(0.01, 1.25), row(0.1, 12.5), row(1.0, 130.0)],
        };
        let twice = r.to_csv() + &r.to_csv();
        assert_eq!(TimingReport::from_csv(&r.to_csv()).unwrap(), r);
        assert_eq!(TimingReport::from_csv(&twice).unwrap().rows.len(), 6);
        assert!(TimingReport::from_csv("1,2,x,4,5\n").is_err());
    }

    #[test]
    fn dhms() {
        assert_eq!(format_dhms(5.0 * 60.0 + 18.0), "00:00:05:18");
        assert_eq!(format_dhms(2.0 * 86_400.0 + 4.0 * 3600.0 + 18.0 * 60.0 + 32.0), "02:04:18:32");
        assert_eq!(format_dhms(0.4), "00:00:00:00");
    }

    #[test]
    fn scaling_examples() {
        let ok = scaling_check(&TimingReport {
            rows: vec![row(0.1, 50.0), row(0.01, 5.3)],
        })
        .unwrap();
        assert!(ok.pass);
        assert!((ok.pairs[0].time_ratio - 50.0 / 5.3).abs() < 1e-12);

        let flat = scaling_check(&TimingReport {
            rows: vec![row(0.1, 5.0), row(0.01, 5.0)],
        })
        .unwrap();
        assert!(!flat.pass);

        assert!(matches!(
            scaling_check(&TimingReport { rows: vec![row(0.1, 5.0)] }),
            Err(ExperimentError::InsufficientRows)
        ));
    }

    #[test]
    fn published_timing_rows_scale_almost_linearly() {
        // the 30 s model rows of the published timing table
        let secs = |h: f64, m: f64, s: f64| h * 3600.0 + m * 60.0 + s;
        let report = TimingReport {
            rows: vec![
                row(0.01, secs(0.0, 5.0, 18.0)),
                row(0.05, secs(0.0, 25.0, 20.0)),
                row(0.10, secs(0.0, 50.0, 58.0)),
                row(1.00, secs(9.0, 1.0, 5.0)),
            ],
        };
        assert!(scaling_check(&report).unwrap().pass);
    }
}
