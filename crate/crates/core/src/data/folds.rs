use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Seeded k-fold partition of `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Shuffle `0..n` once, cut it into `k` contiguous chunks (the first `n mod k`
/// one longer), and validate fold `i` on chunk `i`.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Parameter(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if n < k {
        return Err(Error::Parameter(format!("cannot split {n} samples into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for i in 0..k {
        let len = n / k + usize::from(i < n % k);
        bounds.push(bounds[i] + len);
    }
    let folds = (0..k)
        .map(|i| {
            let (lo, hi) = (bounds[i], bounds[i + 1]);
            Fold {
                val: order[lo..hi].to_vec(),
                train: order[..lo].iter().chain(&order[hi..]).copied().collect(),
            }
        })
        .collect();
    Ok(FoldPlan { n, k, seed, folds })
}

impl FoldPlan {
    /// Tab-separated `fold role id` listing, one row per (fold, sample).
    pub fn to_table(&self, ids: &[String]) -> Result<String> {
        if ids.len() != self.n {
            return Err(Error::Dimension(format!("{} ids for a plan over {} samples", ids.len(), self.n)));
        }
        let mut s = String::from("fold\trole\tid\n");
        for (f, fold) in self.folds.iter().enumerate() {
            for (role, idx) in [("train", &fold.train), ("val", &fold.val)] {
                for &i in idx {
                    let _ = writeln!(s, "{f}\t{role}\t{}", ids[i]);
                }
            }
        }
        Ok(s)
    }
}
