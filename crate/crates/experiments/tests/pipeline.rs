use std::path::Path;

use orcaclass_core::audio::AudioBuffer;
use orcaclass_core::classifier::{cross_validate, SvmModel, TrainParams};
use orcaclass_core::dataset::{build_dataset, load_manifest, read_annotations, ManifestSource, Preprocessing};
use orcaclass_core::features::{FrameSpec, WindowFunction};
use orcaclass_core::segmenter::{classify_stream, classify_wav, SegmentTimeline};
use orcaclass_experiments::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SR: u32 = 44_100;

fn default_spec() -> FrameSpec {
    FrameSpec::new(4096, 2048, WindowFunction::Hamming).unwrap()
}

fn three_class(dir: &Path) -> GeneratedCorpus {
    generate_synthetic_corpus(&SyntheticCorpusSpec::three_class(30, 7), dir).unwrap()
}

fn segmentation_model(c: &GeneratedCorpus) -> SvmModel {
    let src = ManifestSource::new(&c.entries);
    train_segmentation_model(
        &c.annotation_records,
        &src,
        &default_spec(),
        SEGMENTATION_MEMORY,
        &c.label_set,
        200,
        &TrainParams::default(),
    )
    .unwrap()
    .0
}

#[test]
fn corpus_counts_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = three_class(dir.path());
    assert_eq!(c.entries.len(), 90);
    assert_eq!(read_annotations(&c.annotations).unwrap().len(), 90);
    // the manifest on disk holds paths relative to the corpus root
    let on_disk = load_manifest(&c.manifest).unwrap();
    assert_eq!(on_disk.len(), 90);
    for e in &c.entries {
        assert!(e.path.is_file());
    }
    let mut counts = std::collections::HashMap::new();
    for a in &c.annotation_records {
        *counts.entry(a.label.clone()).or_insert(0) += 1;
    }
    assert!(counts.values().all(|&n| n == 30), "{counts:?}");
}

#[test]
fn same_seed_gives_byte_identical_wavs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = SyntheticCorpusSpec::calls(3, 21);
    let ca = generate_synthetic_corpus(&spec, a.path()).unwrap();
    let cb = generate_synthetic_corpus(&spec, b.path()).unwrap();
    for (x, y) in ca.entries.iter().zip(&cb.entries) {
        assert_eq!(std::fs::read(&x.path).unwrap(), std::fs::read(&y.path).unwrap());
    }
    assert_eq!(
        std::fs::read(&ca.annotations).unwrap(),
        std::fs::read(&cb.annotations).unwrap()
    );
    let other = tempfile::tempdir().unwrap();
    let cc = generate_synthetic_corpus(&SyntheticCorpusSpec::calls(3, 22), other.path()).unwrap();
    assert_ne!(
        std::fs::read(&ca.entries[0].path).unwrap(),
        std::fs::read(&cc.entries[0].path).unwrap()
    );
}

#[test]
fn holdout_split_is_accurate_and_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let c = three_class(dir.path());
    let src = ManifestSource::new(&c.entries);
    let (d, report) = build_dataset(&c.annotation_records, &src, &default_spec(), &Preprocessing::None, &c.label_set).unwrap();
    assert!(report.skipped.is_empty());

    // first 70% of each class trains, the rest tests
    let mut seen = vec![0; c.label_set.len()];
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, inst) in d.instances.iter().enumerate() {
        seen[inst.label] += 1;
        if seen[inst.label] <= 21 {
            train.push(i);
        } else {
            test.push(i);
        }
    }
    let model = SvmModel::train(&d.subset(&train), &TrainParams::default()).unwrap();
    let correct = test
        .iter()
        .filter(|&&i| model.predict(&d.instances[i].features).unwrap().label == d.instances[i].label)
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc >= 0.95, "holdout accuracy {acc}");

    let a = cross_validate(&d, 10, 3, &TrainParams::default()).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let c2 = three_class(dir2.path());
    let src2 = ManifestSource::new(&c2.entries);
    let (d2, _) = build_dataset(&c2.annotation_records, &src2, &default_spec(), &Preprocessing::None, &c2.label_set).unwrap();
    let b = cross_validate(&d2, 10, 3, &TrainParams::default()).unwrap();
    assert_eq!(a.matrix, b.matrix);
    assert_eq!(a.predictions, b.predictions);
}

#[test]
fn stream_model_labels_calls_and_silence() {
    let dir = tempfile::tempdir().unwrap();
    let c = three_class(dir.path());
    let model = segmentation_model(&c);
    let spec = default_spec();
    let orca = c.label_set.index_of("orca").unwrap();
    let background = c.label_set.index_of("background").unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut calls = Vec::new();
    for (i, t) in CallTemplate::ALL.iter().cycle().take(12).enumerate() {
        let n = SR as usize + (i * 3001) % SR as usize;
        calls.extend(synth::call(*t, n, SR as f64, &mut rng).iter().map(|v| v * 0.1));
    }
    let buffer = AudioBuffer::new(calls, SR).unwrap();
    let s = classify_stream(&buffer, &model, &spec, SEGMENTATION_MEMORY).unwrap();
    assert_eq!(s.len(), spec.frame_count(buffer.len()));
    let frac = s.labels.iter().filter(|&&l| l == orca).count() as f64 / s.len() as f64;
    assert!(frac >= 0.95, "orca fraction {frac}");

    let silence = AudioBuffer::new(vec![0.0; 5 * SR as usize], SR).unwrap();
    let s = classify_stream(&silence, &model, &spec, SEGMENTATION_MEMORY).unwrap();
    let bg = s.labels.iter().filter(|&&l| l == background).count();
    assert!(2 * bg > s.len(), "{bg} of {}", s.len());
}

#[test]
fn segmentation_tracks_ground_truth_regions() {
    let dir = tempfile::tempdir().unwrap();
    let c = three_class(&dir.path().join("train"));
    let model = segmentation_model(&c);
    let long = LongRecordingSpec::new(3, 30.0, 3);
    let (mut agree, mut total) = (0, 0);
    for i in 0..3 {
        let (x, regions) = long.recording(i);
        let tl = orcaclass_core::segmenter::segment_buffer(
            &AudioBuffer::new(x, SR).unwrap(),
            "r",
            &model,
            &Default::default(),
        )
        .unwrap();
        for k in 0..3000 {
            let t = k as f64 * 0.01;
            let truth = regions.iter().find(|r| r.0 <= t && t < r.1).map(|r| r.2);
            if let (Some(a), Some(b)) = (truth, tl.label_at(t)) {
                total += 1;
                agree += usize::from(a == b);
            }
        }
    }
    let acc = agree as f64 / total as f64;
    assert!(acc >= 0.85, "frame agreement {acc}");
}

#[test]
fn chunked_wav_classification_matches_whole_buffer() {
    let dir = tempfile::tempdir().unwrap();
    let c = three_class(&dir.path().join("train"));
    let model = segmentation_model(&c);
    // longer than one read chunk so chunk boundaries are crossed
    let long = generate_long_recordings(&LongRecordingSpec::new(1, 8.0, 5), &dir.path().join("long")).unwrap();
    let path = &long.entries[0].path;
    let whole = orcaclass_core::audio::load_wav(path).unwrap();
    let a = classify_stream(&whole, &model, &default_spec(), SEGMENTATION_MEMORY).unwrap();
    let b = classify_wav(path, &model).unwrap();
    assert_eq!(a, b);
}

#[test]
fn batch_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let c = three_class(&dir.path().join("train"));
    let model = segmentation_model(&c);
    let long = generate_long_recordings(&LongRecordingSpec::new(6, 10.0, 11), &dir.path().join("long")).unwrap();

    let mut one = BatchConfig::new(1, 1.0);
    one.out_dir = Some(dir.path().join("out1"));
    let mut four = BatchConfig::new(4, 1.0);
    four.out_dir = Some(dir.path().join("out4"));
    let a = run_batch(&long.entries, &model, &one).unwrap();
    let b = run_batch(&long.entries, &model, &four).unwrap();
    assert_eq!(a.timelines, b.timelines);
    assert_eq!(a.timing.files, 6);
    assert_eq!(b.recordings.iter().map(|r| r.worker).collect::<Vec<_>>(), vec![0, 1, 2, 3, 0, 1]);
    for e in &long.entries {
        let name = format!("{}.json", e.recording_id);
        let x = std::fs::read(dir.path().join("out1").join(&name)).unwrap();
        let y = std::fs::read(dir.path().join("out4").join(&name)).unwrap();
        assert_eq!(x, y);
        let t = SegmentTimeline::from_json(std::str::from_utf8(&x).unwrap()).unwrap();
        assert!(!t.segments.is_empty());
        assert!(dir.path().join("out1").join(format!("{}.csv", e.recording_id)).is_file());
    }

    let half = run_batch(&long.entries, &model, &BatchConfig::new(2, 0.5)).unwrap();
    assert_eq!(half.timing.files, 3);
    assert_eq!(half.timelines[..], a.timelines[..3]);
}

#[test]
fn batch_survives_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let c = three_class(&dir.path().join("train"));
    let model = segmentation_model(&c);
    let long = generate_long_recordings(&LongRecordingSpec::new(3, 5.0, 2), &dir.path().join("long")).unwrap();
    let mut entries = long.entries.clone();
    entries[1].path = dir.path().join("missing.wav");
    let out = run_batch(&entries, &model, &BatchConfig::new(2, 1.0)).unwrap();
    assert_eq!(out.timelines.len(), 2);
    assert!(out.recordings[1].error.is_some());
    assert!(out.recordings[0].error.is_none());

    for e in &mut entries {
        e.path = dir.path().join("missing.wav");
    }
    assert!(matches!(
        run_batch(&entries, &model, &BatchConfig::new(2, 1.0)),
        Err(ExperimentError::AllFailed(3))
    ));
}

#[test]
fn dry_run_plan_lists_round_robin_ids() {
    let entries: Vec<_> = (0..10)
        .map(|i| orcaclass_core::dataset::ManifestEntry {
            recording_id: format!("r{i}"),
            path: format!("r{i}.wav").into(),
            duration_s: 1.0,
        })
        .collect();
    let plan = plan_batch(&entries, &BatchConfig::new(3, 1.0)).unwrap();
    assert_eq!(plan.workers.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
    assert_eq!(plan.workers[0], vec!["r0", "r3", "r6", "r9"]);
    let plan = plan_batch(&entries, &BatchConfig::new(3, 0.1)).unwrap();
    assert_eq!(plan.workers, vec![vec!["r0".to_string()], vec![], vec![]]);
    assert!(plan_batch(&entries, &BatchConfig::new(0, 1.0)).is_err());
    assert!(plan_batch(&entries, &BatchConfig::new(1, 0.0)).is_err());
    assert!(plan_batch(&[], &BatchConfig::new(1, 1.0)).is_err());
}

#[test]
fn small_sweep_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate_synthetic_corpus(&SyntheticCorpusSpec::three_class(6, 3), dir.path()).unwrap();
    let src = ManifestSource::new(&c.entries);
    let grid = SweepGrid {
        windows: vec![1024, 2048],
        memories: vec![10, 20],
        per_class: 40,
        ..SweepGrid::full()
    };
    let t = run_sweep(&grid, &c.annotation_records, &src, &c.label_set, &TrainParams::default()).unwrap();
    assert_eq!(t.rows.len(), 4);
    assert!(t.rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy) && r.hop == r.window / 2));
    assert!(t.to_text().contains("2048  1024"));
}

#[test]
fn preprocessing_comparison_reports_each_variant() {
    use orcaclass_core::dataset::MiddleExtract;
    let dir = tempfile::tempdir().unwrap();
    let c = generate_synthetic_corpus(&SyntheticCorpusSpec::three_class(10, 4), dir.path()).unwrap();
    let src = ManifestSource::new(&c.entries);
    let variants = [
        ("none".to_string(), Preprocessing::None),
        ("trim".to_string(), Preprocessing::TrimSilence { threshold_ratio: 0.1 }),
        ("middle 0.5 s".to_string(), Preprocessing::MiddleExtract(MiddleExtract::uniform(0.5))),
        // shorter than one 4096-sample window: every clip is skipped
        ("middle 23 ms".to_string(), Preprocessing::MiddleExtract(MiddleExtract::uniform(0.023))),
    ];
    let res = compare_preprocessing(
        &variants[..3],
        &c.annotation_records,
        &src,
        &default_spec(),
        &c.label_set,
        5,
        1,
        &TrainParams::default(),
    )
    .unwrap();
    assert_eq!(res.len(), 3);
    assert!(res.iter().all(|r| r.instances == 30 && r.skipped == 0));
    assert!(compare_preprocessing(
        &variants[3..],
        &c.annotation_records,
        &src,
        &default_spec(),
        &c.label_set,
        5,
        1,
        &TrainParams::default(),
    )
    .is_err());
}

#[test]
fn call_types_are_reported_per_clip_and_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate_synthetic_corpus(&SyntheticCorpusSpec::calls(30, 7), dir.path()).unwrap();
    let src = ManifestSource::new(&c.entries);
    let t = std::time::Instant::now();
    let cv = clip_and_frame_cv(
        &c.annotation_records,
        &src,
        &default_spec(),
        80,
        &c.label_set,
        10,
        1,
        10,
        &TrainParams::default(),
    )
    .unwrap();
    println!("{}\n{}\n{:?}", cv.clip.matrix, cv.frame, t.elapsed());
    assert_eq!(cv.clip.matrix.total(), 180);
    assert!(cv.frame.total() > 180 * 10);
    assert!(cv.clip.accuracy >= 0.95);
    assert_eq!(cv.skipped, 0);
}
