use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::smo::{train_binary_smo, BinarySvm, SmoParams, DEFAULT_MAX_PASSES};
use super::{ClassifierError, Kernel, NormStats, Result};
use crate::dataset::{Dataset, LabelSet};
use crate::features::FrameSpec;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub c: f64,
    pub kernel: Kernel,
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel: Kernel::Linear,
            tol: 1e-3,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

impl TrainParams {
    fn smo(&self) -> SmoParams {
        SmoParams {
            c: self.c,
            kernel: self.kernel,
            tol: self.tol,
            max_passes: self.max_passes,
        }
    }
}

/// How the model's training vectors were computed, so a segmenter can
/// reproduce them on new audio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub frame_spec: FrameSpec,
    pub memory: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub schema_version: u32,
    pub label_set: LabelSet,
    pub feature_names: Vec<String>,
    pub norm_stats: NormStats,
    pub kernel: Kernel,
    pub c: f64,
    #[serde(default)]
    pub features: Option<FeatureConfig>,
    /// One machine per unordered label pair `(a, b)`, `a < b`, in
    /// lexicographic order.
    pub machines: Vec<BinarySvm>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub votes: Vec<usize>,
}

fn label_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect()
}

impl SvmModel {
    /// Standardizes `d` with its own statistics and fits every pairwise
    /// machine. Every label of the set must have at least one instance.
    pub fn train(d: &Dataset, params: &TrainParams) -> Result<SvmModel> {
        d.validate()?;
        if d.is_empty() {
            return Err(crate::dataset::DatasetError::Empty.into());
        }
        let counts = d.class_counts();
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(ClassifierError::MissingClass(
                d.label_set.name(missing).unwrap_or_default().to_string(),
            ));
        }

        let raw: Vec<Vec<f64>> = d.instances.iter().map(|i| i.features.clone()).collect();
        let norm_stats = NormStats::fit(&raw);
        let x: Vec<Vec<f64>> = raw.iter().map(|r| norm_stats.apply(r)).collect();
        let smo = params.smo();

        let machines = label_pairs(d.label_set.len())
            .into_par_iter()
            .map(|(a, b)| {
                let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = d
                    .instances
                    .iter()
                    .zip(&x)
                    .filter(|(i, _)| i.label == a || i.label == b)
                    .map(|(i, v)| (v.clone(), if i.label == a { 1.0 } else { -1.0 }))
                    .unzip();
                let mut m = train_binary_smo(&xs, &ys, &smo)?;
                m.classes = [a, b];
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(SvmModel {
            schema_version: MODEL_SCHEMA_VERSION,
            label_set: d.label_set.clone(),
            feature_names: d.feature_names.clone(),
            norm_stats,
            kernel: params.kernel,
            c: params.c,
            features: None,
            machines,
        })
    }

    pub fn with_features(mut self, features: FeatureConfig) -> Self {
        self.features = Some(features);
        self
    }

    pub fn dim(&self) -> usize {
        self.norm_stats.dim()
    }

    /// Whether every pairwise machine reached the KKT tolerance.
    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    /// Majority vote over the pairwise machines on a raw (unnormalized)
    /// vector; equal vote counts go to the lowest label index.
    pub fn predict(&self, v: &[f64]) -> Result<Prediction> {
        if v.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        let z = self.norm_stats.apply(v);
        let mut votes = vec![0usize; self.label_set.len()];
        for m in &self.machines {
            let winner = if m.decision_value(&z) >= 0.0 { m.classes[0] } else { m.classes[1] };
            votes[winner] += 1;
        }
        let best = *votes.iter().max().unwrap_or(&0);
        let label = votes.iter().position(|&c| c == best).unwrap_or(0);
        Ok(Prediction { label, votes })
    }

    /// Checks the structural invariants of a deserialized model.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(ClassifierError::SchemaVersion(self.schema_version));
        }
        let invalid = |m: String| Err(ClassifierError::InvalidModel(m));
        if self.norm_stats.stds.len() != self.dim() {
            return invalid("norm stats means/stds differ in length".into());
        }
        let pairs = label_pairs(self.label_set.len());
        if self.machines.len() != pairs.len() {
            return invalid(format!(
                "{} machines for {} labels (expected {})",
                self.machines.len(),
                self.label_set.len(),
                pairs.len()
            ));
        }
        for (m, (a, b)) in self.machines.iter().zip(pairs) {
            if m.classes != [a, b] {
                return invalid(format!("machine for {:?} out of order, expected [{a}, {b}]", m.classes));
            }
            if m.alphas.len() != m.support_vectors.len() || m.labels.len() != m.alphas.len() {
                return invalid(format!("machine [{a}, {b}] has inconsistent support vector arrays"));
            }
            if m.support_vectors.iter().any(|sv| sv.len() != self.dim()) {
                return invalid(format!("machine [{a}, {b}] has a support vector of the wrong dimension"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SvmModel> {
        let m: SvmModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| ClassifierError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<SvmModel> {
        let text = std::fs::read_to_string(path).map_err(|source| ClassifierError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Instance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gaussian-ish blobs centred on well separated corners.
    pub(crate) fn blobs(k: usize, per_class: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut instances = Vec::new();
        for label in 0..k {
            for _ in 0..per_class {
                let features = (0..dim)
                    .map(|d| if d == label % dim { 10.0 } else { 0.0 } + (label / dim) as f64 * 10.0 + rng.random_range(-1.0..1.0))
                    .collect();
                instances.push(Instance { features, label });
            }
        }
        let names = (0..k).map(|i| format!("c{i}")).collect::<Vec<_>>();
        Dataset::new(
            "blobs",
            (0..dim).map(|i| format!("f{i}")).collect(),
            LabelSet::new(names).unwrap(),
            instances,
        )
        .unwrap()
    }

    #[test]
    fn machine_counts() {
        let m3 = SvmModel::train(&blobs(3, 10, 3, 1), &TrainParams::default()).unwrap();
        assert_eq!(m3.machines.len(), 3);
        let m6 = SvmModel::train(&blobs(6, 8, 3, 2), &TrainParams::default()).unwrap();
        assert_eq!(m6.machines.len(), 15);
        let pairs: Vec<[usize; 2]> = m6.machines.iter().map(|m| m.classes).collect();
        assert_eq!(pairs[0], [0, 1]);
        assert_eq!(pairs[14], [4, 5]);
    }

    #[test]
    fn separable_training_points_get_their_own_label() {
        let d = blobs(3, 20, 3, 3);
        let m = SvmModel::train(&d, &TrainParams::default()).unwrap();
        assert!(m.converged());
        for inst in &d.instances {
            let p = m.predict(&inst.features).unwrap();
            assert_eq!(p.label, inst.label);
            assert_eq!(p.votes.iter().sum::<usize>(), 3);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let d = blobs(4, 15, 3, 4);
        let a = SvmModel::train(&d, &TrainParams::default()).unwrap();
        let b = SvmModel::train(&d, &TrainParams::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let d = blobs(3, 10, 3, 5);
        let m = SvmModel::train(&d, &TrainParams::default()).unwrap();
        let back = SvmModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);

        let mut broken = m.clone();
        broken.machines.pop();
        assert!(SvmModel::from_json(&broken.to_json().unwrap()).is_err());
        let mut future = m.clone();
        future.schema_version = 99;
        assert!(matches!(
            SvmModel::from_json(&future.to_json().unwrap()),
            Err(ClassifierError::SchemaVersion(99))
        ));
    }

    #[test]
    fn dimension_mismatch_and_missing_class() {
        let d = blobs(3, 10, 3, 6);
        let m = SvmModel::train(&d, &TrainParams::default()).unwrap();
        assert!(matches!(
            m.predict(&[0.0; 2]),
            Err(ClassifierError::DimensionMismatch { expected: 3, actual: 2 })
        ));
        let only_two = d.subset(&(0..20).collect::<Vec<_>>());
        assert!(matches!(
            SvmModel::train(&only_two, &TrainParams::default()),
            Err(ClassifierError::MissingClass(_))
        ));
    }

    #[test]
    fn tied_votes_go_to_lowest_label() {
        // three machines that each vote for their first class: 0 beats 1,
        // 1 beats 2, 2 beats 0 -> a three-way tie
        let d = blobs(3, 10, 3, 7);
        let mut m = SvmModel::train(&d, &TrainParams::default()).unwrap();
        for mach in &mut m.machines {
            mach.alphas.iter_mut().for_each(|a| *a = 0.0);
            mach.bias = if mach.classes == [0, 2] { -1.0 } else { 1.0 };
        }
        let mach_json = serde_json::to_string(&m).unwrap();
        let m: SvmModel = serde_json::from_str(&mach_json).unwrap();
        let p = m.predict(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.votes, vec![1, 1, 1]);
        assert_eq!(p.label, 0);
    }

    #[test]
    fn affine_rescaling_does_not_change_predictions() {
        let d = blobs(3, 15, 3, 8);
        let mut scaled = d.clone();
        let (a, b) = (-37.5, 1e3);
        for inst in &mut scaled.instances {
            inst.features.iter_mut().for_each(|v| *v = a * *v + b);
        }
        let m1 = SvmModel::train(&d, &TrainParams::default()).unwrap();
        let m2 = SvmModel::train(&scaled, &TrainParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..12.0)).collect();
            let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            assert_eq!(m1.predict(&v).unwrap().label, m2.predict(&w).unwrap().label);
        }
    }
}
