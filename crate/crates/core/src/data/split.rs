use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{self, tag};

use super::{DatasetIndex, SampleRef};

/// Train / validation / test fractions.
pub const SPLIT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "val" | "validation" => Ok(SplitKind::Val),
            "test" => Ok(SplitKind::Test),
            other => Err(Error::Config(format!(
                "unknown split '{other}', expected train, val or test"
            ))),
        }
    }
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub classes: Vec<String>,
    pub train: Vec<SampleRef>,
    pub val: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn get(&self, kind: SplitKind) -> &[SampleRef] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }

    /// Per-class sample counts of one split.
    pub fn class_counts(&self, kind: SplitKind) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in self.get(kind) {
            counts[s.class_index] += 1;
        }
        counts
    }
}

/// `(n_train, n_val, n_test)` for a class of `n` samples: floors for train and
/// validation, the remainder goes to test.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    // Integer arithmetic keeps the floor exact (0.7 * n in floating point can
    // land just under an integer).
    let train = n * 70 / 100;
    let val = n * 15 / 100;
    (train, val, n - train - val)
}

/// Per-class seeded shuffle, then a 70/15/15 floor-rule partition.
///
/// Each split lists its samples in index order.
pub fn stratified_split(index: &DatasetIndex, seed: u64) -> Result<SplitAssignment> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); index.classes.len()];
    for (i, s) in index.samples.iter().enumerate() {
        by_class[s.class_index].push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (class_index, members) in by_class.iter_mut().enumerate() {
        let n = members.len();
        if n < 3 {
            return Err(Error::Stratification {
                class: index.classes[class_index].clone(),
                count: n,
            });
        }
        let mut rng = rng::stream(seed, &[tag::SPLIT, class_index as u64]);
        rng::shuffle(members, &mut rng);
        let (n_train, n_val, _) = split_counts(n);
        if n_val == 0 {
            let msg = format!(
                "class '{}' has {n} samples; its validation slice is empty",
                index.classes[class_index]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    let materialize = |mut ids: Vec<usize>| -> Vec<SampleRef> {
        ids.sort_unstable();
        ids.into_iter().map(|i| index.samples[i].clone()).collect()
    };
    Ok(SplitAssignment {
        seed,
        ratios: SPLIT_RATIOS,
        classes: index.classes.clone(),
        train: materialize(train),
        val: materialize(val),
        test: materialize(test),
        warnings,
    })
}
