use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, Result, SvmModel, TrainParams};
use crate::dataset::{stratified_kfold, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    /// Held-out prediction for every instance, in dataset order.
    pub predictions: Vec<usize>,
    /// Whether every machine of every fold model converged.
    pub converged: bool,
}

/// Stratified k-fold cross-validation. Each fold model is trained (and its
/// normalization fitted) on the other k-1 folds only.
pub fn cross_validate(d: &Dataset, k: usize, seed: u64, params: &TrainParams) -> Result<CrossValidation> {
    let folds = stratified_kfold(d, k, seed)?;
    let results = (0..folds.len())
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let model = SvmModel::train(&d.subset(&train_idx), params)?;
            let preds = folds[f]
                .iter()
                .map(|&i| model.predict(&d.instances[i].features).map(|p| (i, p.label)))
                .collect::<Result<Vec<_>>>()?;
            Ok((preds, model.converged()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut matrix = ConfusionMatrix::new(d.label_set.names().to_vec());
    let mut predictions = vec![usize::MAX; d.len()];
    let mut converged = true;
    for (preds, ok) in results {
        converged &= ok;
        for (i, label) in preds {
            predictions[i] = label;
            matrix.record(d.instances[i].label, label);
        }
    }
    debug_assert!(predictions.iter().all(|&p| p != usize::MAX));
    Ok(CrossValidation {
        accuracy: matrix.accuracy(),
        matrix,
        predictions,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Instance, LabelSet};

    #[test]
    fn separable_data_is_perfect() {
        let mut instances = Vec::new();
        for label in 0..3 {
            for i in 0..12 {
                let mut f = vec![0.0; 4];
                f[label] = 5.0 + 0.1 * i as f64;
                f[3] = (i as f64).sin();
                instances.push(Instance { features: f, label });
            }
        }
        let names = (0..4).map(|i| format!("f{i}")).collect();
        let d = Dataset::new("sep", names, LabelSet::three_class(), instances).unwrap();
        let cv = cross_validate(&d, 10, 42, &TrainParams::default()).unwrap();
        assert_eq!(cv.accuracy, 1.0);
        assert_eq!(cv.matrix.off_diagonal(), 0);
        assert_eq!(cv.matrix.row_sums(), d.class_counts());
    }

    #[test]
    fn duplicated_instances_with_two_folds() {
        let mut instances = Vec::new();
        for label in 0..3 {
            let mut f = vec![0.0; 3];
            f[label] = 1.0;
            for _ in 0..2 {
                instances.push(Instance { features: f.clone(), label });
            }
        }
        let names = (0..3).map(|i| format!("f{i}")).collect();
        let d = Dataset::new("dup", names, LabelSet::three_class(), instances).unwrap();
        let cv = cross_validate(&d, 2, 7, &TrainParams::default()).unwrap();
        assert_eq!(cv.accuracy, 1.0);
    }

    #[test]
    fn fold_failure_propagates() {
        let instances = vec![
            Instance { features: vec![0.0], label: 0 },
            Instance { features: vec![1.0], label: 1 },
            Instance { features: vec![2.0], label: 2 },
        ];
        let d = Dataset::new("t", vec!["f".into()], LabelSet::three_class(), instances).unwrap();
        assert!(cross_validate(&d, 10, 1, &TrainParams::default()).is_err());
    }
}
