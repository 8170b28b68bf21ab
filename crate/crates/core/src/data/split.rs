//! Stratified splitting and minority-class oversampling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{augment, class_counts, AugmentConfig, Sample};
use crate::error::{Error, Result};
use crate::rng::{purpose, substream};

/// Train / validation / test partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl DatasetSplit {
    pub fn manifest(&self, class_names: &[String]) -> SplitManifest {
        let paths = |v: &[Sample]| v.iter().map(|s| s.source.clone()).collect();
        SplitManifest {
            class_names: class_names.to_vec(),
            train: paths(&self.train),
            val: paths(&self.val),
            test: paths(&self.test),
        }
    }
}

/// Source paths per split, as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub class_names: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn by_class(samples: &[Sample]) -> Vec<Vec<usize>> {
    let k = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
    let mut groups = vec![Vec::new(); k];
    for (i, s) in samples.iter().enumerate() {
        groups[s.label].push(i);
    }
    groups
}

/// Stratified shuffled split with explicit per-class `(train, val, test)`
/// counts; each class's counts must sum to its size.
pub fn split_by_counts(samples: &[Sample], counts: &[(usize, usize, usize)], seed: u64) -> Result<DatasetSplit> {
    let groups = by_class(samples);
    if groups.len() > counts.len() {
        return Err(Error::Config(format!("split counts given for {} classes, data has {}", counts.len(), groups.len())));
    }
    let mut out = DatasetSplit::default();
    for (label, idx) in groups.iter().enumerate() {
        let (tr, va, te) = counts[label];
        if tr + va + te != idx.len() {
            return Err(Error::Config(format!("class {label}: split counts {tr}+{va}+{te} != {} samples", idx.len())));
        }
        let mut idx = idx.clone();
        idx.shuffle(&mut substream(seed, &[purpose::SPLIT, label as u64]));
        out.train.extend(idx[..tr].iter().map(|&i| samples[i].clone()));
        out.val.extend(idx[tr..tr + va].iter().map(|&i| samples[i].clone()));
        out.test.extend(idx[tr + va..].iter().map(|&i| samples[i].clone()));
    }
    Ok(out)
}

/// Stratified shuffled split by fractions, which must be positive and sum
/// to 1 (within 1e-9). Every class with at least three samples appears in
/// every split.
pub fn split(samples: &[Sample], fractions: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be positive and sum to 1")));
    }
    let counts: Vec<_> = by_class(samples)
        .iter()
        .map(|idx| {
            let n = idx.len();
            let mut tr = (n as f64 * a).round() as usize;
            let mut va = (n as f64 * b).round() as usize;
            if n >= 3 {
                tr = tr.clamp(1, n - 2);
                va = va.clamp(1, n - tr - 1);
            } else {
                tr = tr.min(n);
                va = va.min(n - tr);
            }
            (tr, va, n - tr - va)
        })
        .collect();
    split_by_counts(samples, &counts, seed)
}

/// Per-class class totals of the public four-class Alzheimer MRI collection
/// (mild, moderate, non-demented, very mild, in sorted-name order) and their
/// published train / validation / test allocation.
const KAGGLE_LAYOUT: [(usize, (usize, usize, usize)); 4] =
    [(896, (574, 143, 179)), (65, (41, 11, 13)), (3200, (2048, 512, 640)), (2240, (1434, 358, 448))];

/// The published absolute split counts when `class_totals` matches that
/// collection exactly, `None` otherwise.
pub fn kaggle_split_counts(class_totals: &[usize]) -> Option<Vec<(usize, usize, usize)>> {
    let matches = class_totals.len() == KAGGLE_LAYOUT.len()
        && class_totals.iter().zip(KAGGLE_LAYOUT).all(|(&n, (total, _))| n == total);
    matches.then(|| KAGGLE_LAYOUT.iter().map(|&(_, c)| c).collect())
}

/// Uses the published absolute counts when the layout is recognised,
/// otherwise [`split`] with `fractions`.
pub fn split_auto(samples: &[Sample], num_classes: usize, fractions: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    match kaggle_split_counts(&class_counts(samples, num_classes)) {
        Some(counts) => split_by_counts(samples, &counts, seed),
        None => split(samples, fractions, seed),
    }
}

/// Tops every minority class up to the majority count with augmented copies
/// of its own (randomly chosen) members. Originals are kept in order; copies
/// are appended and tagged `#os<k>` in their source.
pub fn oversample_balance(train: &[Sample], cfg: &AugmentConfig, seed: u64) -> Vec<Sample> {
    let groups = by_class(train);
    let target = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = train.to_vec();
    for (label, idx) in groups.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        for k in 0..target - idx.len() {
            let mut rng = substream(seed, &[purpose::OVERSAMPLE, label as u64, k as u64]);
            let src = &train[idx[rng.random_range(0..idx.len())]];
            let mut copy = augment(src, cfg, &mut rng);
            copy.source = format!("{}#os{k}", src.source);
            out.push(copy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use std::collections::HashSet;

    fn fake(counts: &[usize]) -> Vec<Sample> {
        let mut v = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for i in 0..n {
                v.push(Sample { image: Tensor::full(&[1, 2, 2], 0.5), label, source: format!("{label}/{i}") });
            }
        }
        v
    }

    #[test]
    fn fractions_give_exact_stratified_counts() {
        let data = fake(&[100; 4]);
        let s = split(&data, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (320, 40, 40));
        assert_eq!(class_counts(&s.train, 4), vec![80; 4]);
        assert_eq!(class_counts(&s.val, 4), vec![10; 4]);
        let s2 = split(&data, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!(s, s2);
        assert!(split(&data, (0.5, 0.5, 0.5), 3).is_err());
        assert!(split(&data, (1.0, 0.0, 0.0), 3).is_err());
    }

    #[test]
    fn split_is_partition() {
        let data = fake(&[7, 3, 12]);
        let s = split(&data, (0.7, 0.1, 0.2), 5).unwrap();
        let mut seen = HashSet::new();
        for x in s.train.iter().chain(&s.val).chain(&s.test) {
            assert!(seen.insert(x.source.clone()));
        }
        assert_eq!(seen.len(), data.len());
        for part in [&s.train, &s.val, &s.test] {
            assert!(class_counts(part, 3).iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn kaggle_counts_detected() {
        assert!(kaggle_split_counts(&[896, 65, 3200, 2240]).is_some());
        assert!(kaggle_split_counts(&[896, 65, 3200, 2241]).is_none());
        let c = kaggle_split_counts(&[896, 65, 3200, 2240]).unwrap();
        assert_eq!(c.iter().map(|t| t.0).collect::<Vec<_>>(), vec![574, 41, 2048, 1434]);
    }

    #[test]
    fn oversampling_balances() {
        let data = fake(&[574, 41, 2048, 1434]);
        let out = oversample_balance(&data, &AugmentConfig::default(), 1);
        assert_eq!(class_counts(&out, 4), vec![2048; 4]);
        assert_eq!(out.len(), 8192);
        assert_eq!(&out[..data.len()], &data[..]);
        let balanced = fake(&[5, 5]);
        assert_eq!(oversample_balance(&balanced, &AugmentConfig::default(), 1), balanced);
        let single = fake(&[4]);
        assert_eq!(oversample_balance(&single, &AugmentConfig::default(), 1), single);
    }
}
