use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Ladder-level (original-image) split fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions {f:?} must be non-negative and sum to 1"
            )));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes: floor for val and test, remainder to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The small slack keeps exact products such as 0.1 * 10 from flooring low.
        let val = (self.val * n as f64 + 1e-9).floor() as usize;
        let test = (self.test * n as f64 + 1e-9).floor() as usize;
        (n.saturating_sub(val + test), val, test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn part(&self, name: &str) -> Option<&[String]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Seeded partition of ladder ids. The result does not depend on the input
/// order; each part is returned sorted.
pub fn split_dataset(ladder_ids: &[String], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let unique: BTreeSet<&String> = ladder_ids.iter().collect();
    if unique.len() != ladder_ids.len() {
        return Err(Error::DuplicateEntry("ladder id listed twice in split input".into()));
    }
    let n = unique.len();
    let (n_train, n_val, n_test) = spec.sizes(n);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::TooFewLadders(format!(
            "{n} ladders give split sizes ({n_train}, {n_val}, {n_test}); every split needs at least one"
        )));
    }
    let mut ids: Vec<String> = unique.into_iter().cloned().collect();
    ids.shuffle(&mut seed::rng(spec.seed, &[seed::hash_str("split")]));
    let part = |range: std::ops::Range<usize>| {
        let mut v = ids[range].to_vec();
        v.sort();
        v
    };
    Ok(Split {
        train: part(0..n_train),
        val: part(n_train..n_train + n_val),
        test: part(n_train + n_val..n),
    })
}
