use chrono::{TimeZone, Utc};
use orcaclass_core::classifier::{SvmModel, TrainParams};
use orcaclass_core::dataset::{
    export_arff, read_arff, read_annotations, Annotation, AnnotationLog, Dataset, DatasetError, Instance, LabelSet,
};
use orcaclass_core::features::texture_feature_names;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_dataset(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, 1.0).unwrap();
    let instances = (0..n)
        .map(|i| {
            let label = i % 3;
            let features = (0..34)
                .map(|d| {
                    let scale = 10f64.powi(rng.random_range(-8..6));
                    scale * (spread.sample(&mut rng) + if d % 3 == label { 3.0 } else { 0.0 })
                })
                .collect();
            Instance { features, label }
        })
        .collect();
    Dataset::new("random", texture_feature_names(), LabelSet::three_class(), instances).unwrap()
}

#[test]
fn arff_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let d = random_dataset(1, 60);
    let path = dir.path().join("d.arff");
    export_arff(&d, &path).unwrap();
    let back = read_arff(&path).unwrap();
    assert_eq!(back.feature_names, d.feature_names);
    assert_eq!(back.label_set, d.label_set);
    assert_eq!(back.labels(), d.labels());
    for (a, b) in back.instances.iter().zip(&d.instances) {
        for (x, y) in a.features.iter().zip(&b.features) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-300), "{x} vs {y}");
        }
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("@ATTRIBUTE")).count(), 35);
}

fn ann(id: &str, start: f64, end: f64, label: &str) -> Annotation {
    Annotation {
        id: id.into(),
        recording_id: "rec".into(),
        start_s: start,
        end_s: end,
        label: label.into(),
        author: "tester".into(),
        created_at: Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
    }
}

#[test]
fn annotation_log_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("annotations.jsonl");
    {
        let mut log = AnnotationLog::open(&path).unwrap();
        log.append(ann("a", 0.0, 1.5, "orca")).unwrap();
        log.append(ann("b", 2.0, 3.0, "voice")).unwrap();
        log.append(ann("c", 4.0, 5.0, "background")).unwrap();
        // same id, same content: no-op
        log.append(ann("a", 0.0, 1.5, "orca")).unwrap();
        assert!(matches!(
            log.append(ann("a", 0.0, 2.0, "orca")),
            Err(DatasetError::DuplicateId(_))
        ));
        assert!(log.delete("b").unwrap().is_some());
        assert!(log.delete("missing").unwrap().is_none());
    }
    let reopened = AnnotationLog::open(&path).unwrap();
    let ids: Vec<String> = reopened.list(None).into_iter().map(|a| a.id).collect();
    assert_eq!(ids, vec!["a", "c"]);
    assert_eq!(reopened.get("a").unwrap(), &ann("a", 0.0, 1.5, "orca"));
    assert_eq!(read_annotations(&path).unwrap().len(), 2);
    // every line of the log is standalone JSON
    for line in std::fs::read_to_string(&path).unwrap().lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn model_json_reproduces_predictions() {
    let d = random_dataset(2, 90);
    let model = SvmModel::train(&d, &TrainParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = SvmModel::load(&path).unwrap();
    assert_eq!(loaded, model);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let base = &d.instances[rng.random_range(0..d.len())].features;
        let v: Vec<f64> = base.iter().map(|x| x * rng.random_range(0.5..1.5)).collect();
        assert_eq!(model.predict(&v).unwrap(), loaded.predict(&v).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arff_text_round_trips(values in prop::collection::vec(prop::num::f64::NORMAL, 2..40)) {
        let instances = values
            .chunks(2)
            .enumerate()
            .filter(|(_, c)| c.len() == 2)
            .map(|(i, c)| Instance { features: c.to_vec(), label: i % 2 })
            .collect::<Vec<_>>();
        let d = Dataset::new("p", vec!["x".into(), "y".into()], LabelSet::new(["a", "b"]).unwrap(), instances).unwrap();
        let back = orcaclass_core::dataset::parse_arff(&orcaclass_core::dataset::write_arff_string(&d).unwrap()).unwrap();
        prop_assert_eq!(back, d);
    }
}
