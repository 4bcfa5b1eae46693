//! Edge splits: train/val and the combined calibration/test pool, plus the
//! per-permutation calibration/test partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::Graph;

/// Disjoint partition of edge indices into train/val/calib/test.
///
/// Straight out of [`split_edges`] the calibration set is empty and the
/// test set holds the whole calibration/test pool; [`permute_ct`] splits
/// that pool. Index sets are kept sorted so serialization is reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub calib: Vec<usize>,
    pub test: Vec<usize>,
}

impl EdgeSplit {
    /// Check the partition property against a graph with `n_edges` edges:
    /// pairwise disjoint, union covers every edge, train and val nonempty.
    pub fn validate(&self, n_edges: usize) -> Result<()> {
        if self.train.is_empty() || self.val.is_empty() {
            return Err(CoreError::Validation(
                "train and val sets must be nonempty".into(),
            ));
        }
        let mut seen = vec![false; n_edges];
        for (name, set) in [
            ("train", &self.train),
            ("val", &self.val),
            ("calib", &self.calib),
            ("test", &self.test),
        ] {
            for &i in set.iter() {
                if i >= n_edges {
                    return Err(CoreError::Validation(format!(
                        "{name} set references edge {i} outside 0..{n_edges}"
                    )));
                }
                if seen[i] {
                    return Err(CoreError::Validation(format!(
                        "edge {i} appears in more than one split set"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(CoreError::Validation(
                "split sets do not cover the full edge set".into(),
            ));
        }
        Ok(())
    }

    /// The calibration/test pool (sorted).
    pub fn ct_pool(&self) -> Vec<usize> {
        let mut pool: Vec<usize> = self.calib.iter().chain(self.test.iter()).copied().collect();
        pool.sort_unstable();
        pool
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Randomly partition the edge set into train/val and the calibration/test
/// pool according to `fractions = (train, val, ct)`. Deterministic for a
/// fixed seed. The returned split has `test` holding the whole ct pool and
/// `calib` empty, until [`permute_ct`] is applied.
pub fn split_edges(g: &Graph, fractions: (f64, f64, f64), seed: u64) -> Result<EdgeSplit> {
    let (f_train, f_val, f_ct) = fractions;
    for f in [f_train, f_val, f_ct] {
        if f <= 0.0 {
            return Err(CoreError::Config(format!(
                "split fractions must be positive, got {fractions:?}"
            )));
        }
    }
    let sum = f_train + f_val + f_ct;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CoreError::Config(format!(
            "split fractions must sum to 1, got {fractions:?} (sum {sum})"
        )));
    }
    let m = g.n_edges();
    let n_train = (f_train * m as f64).round() as usize;
    let n_val = (f_val * m as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= m {
        return Err(CoreError::Config(format!(
            "fractions {fractions:?} leave an empty split for {m} edges"
        )));
    }

    let mut indices: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let mut train: Vec<usize> = indices[..n_train].to_vec();
    let mut val: Vec<usize> = indices[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = indices[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    let split = EdgeSplit {
        train,
        val,
        calib: Vec::new(),
        test,
    };
    split.validate(m)?;
    Ok(split)
}

/// Randomly partition the calibration/test pool into disjoint calib and
/// test sets, leaving train/val untouched. Deterministic for a fixed seed.
pub fn permute_ct(split: &EdgeSplit, calib_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    if !(calib_fraction > 0.0 && calib_fraction < 1.0) {
        return Err(CoreError::Config(format!(
            "calib_fraction must lie strictly in (0, 1), got {calib_fraction}"
        )));
    }
    let mut pool = split.ct_pool();
    if pool.is_empty() {
        return Err(CoreError::Config(
            "calibration/test pool is empty; nothing to permute".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let n_calib = ((calib_fraction * pool.len() as f64).round() as usize)
        .clamp(1, pool.len() - 1);
    let mut calib: Vec<usize> = pool[..n_calib].to_vec();
    let mut test: Vec<usize> = pool[n_calib..].to_vec();
    calib.sort_unstable();
    test.sort_unstable();
    Ok(EdgeSplit {
        train: split.train.clone(),
        val: split.val.clone(),
        calib,
        test,
    })
}
