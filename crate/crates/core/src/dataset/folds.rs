use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, DatasetError, Result};

/// Splits instance indices into `k` disjoint folds with every class spread
/// as evenly as possible. Each class is shuffled with the seeded generator
/// and dealt round-robin, continuing from the fold where the previous class
/// stopped so fold sizes also stay balanced.
pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(DatasetError::BadK(k));
    }
    if d.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.label_set.len()];
    for (i, inst) in d.instances.iter().enumerate() {
        by_class[inst.label].push(i);
    }
    for (label, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(DatasetError::ClassTooSmall {
                label: d.label_set.name(label).unwrap_or("?").to_string(),
                count: members.len(),
                k,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Instance, LabelSet};
    use proptest::prelude::*;

    fn dataset(counts: &[usize]) -> Dataset {
        let labels = LabelSet::new((0..counts.len().max(2)).map(|i| format!("c{i}"))).unwrap();
        let instances = counts
            .iter()
            .enumerate()
            .flat_map(|(label, &n)| (0..n).map(move |j| Instance { features: vec![j as f64], label }))
            .collect();
        Dataset::new("t", vec!["f".into()], labels, instances).unwrap()
    }

    fn per_class(d: &Dataset, fold: &[usize]) -> Vec<usize> {
        let mut c = vec![0; d.label_set.len()];
        for &i in fold {
            c[d.instances[i].label] += 1;
        }
        c
    }

    #[test]
    fn balanced_two_class() {
        let d = dataset(&[50, 50]);
        let folds = stratified_kfold(&d, 10, 7).unwrap();
        for f in &folds {
            assert_eq!(f.len(), 10);
            assert_eq!(per_class(&d, f), vec![5, 5]);
        }
    }

    #[test]
    fn one_of_each_class_per_fold() {
        let d = dataset(&[10, 10, 10]);
        let folds = stratified_kfold(&d, 10, 99).unwrap();
        for f in &folds {
            assert_eq!(per_class(&d, f), vec![1, 1, 1]);
        }
    }

    #[test]
    fn seeded_and_deterministic() {
        let d = dataset(&[13, 21, 8]);
        assert_eq!(stratified_kfold(&d, 4, 3).unwrap(), stratified_kfold(&d, 4, 3).unwrap());
        assert_ne!(stratified_kfold(&d, 4, 3).unwrap(), stratified_kfold(&d, 4, 4).unwrap());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            stratified_kfold(&dataset(&[9, 20]), 10, 0),
            Err(DatasetError::ClassTooSmall { count: 9, k: 10, .. })
        ));
        assert!(matches!(stratified_kfold(&dataset(&[5, 5]), 1, 0), Err(DatasetError::BadK(1))));
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(
            counts in proptest::collection::vec(5usize..40, 2..6),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            let d = dataset(&counts);
            let folds = stratified_kfold(&d, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
            for c in 0..counts.len() {
                let per: Vec<usize> = folds.iter().map(|f| per_class(&d, f)[c]).collect();
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
