use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use crate::error::{Error, Result};
use crate::util::stable_hash;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            val_fraction: 0.2,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidSplit(format!("fractions must be positive, got {f:?}")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train_fraction, self.val_fraction, self.test_fraction]
    }

    /// Largest-remainder allocation of `n` items; each count is within one
    /// of `n * fraction`.
    pub fn allocate(&self, n: usize) -> [usize; 3] {
        let exact = self.fractions().map(|f| f * n as f64);
        let mut counts = exact.map(|x| (x + 1e-9).floor() as usize);
        let mut left = n - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        // stable: ties go to train, then val, then test
        order.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

/// Per-category stratified split. Frames of one video form a single unit so
/// a video never straddles two splits. Within each category units are
/// ordered by a seeded hash of their id, then cut by the allocated counts.
/// Output manifests keep the input order.
pub fn split_dataset(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest)> {
    spec.validate()?;
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut by_category: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (i, s) in manifest.samples.iter().enumerate() {
        let unit = s.video_id.as_deref().unwrap_or(&s.sample_id);
        by_category
            .entry(s.category.as_str())
            .or_default()
            .entry(unit)
            .or_default()
            .push(i);
    }
    let mut assignment = vec![0u8; manifest.len()];
    for units in by_category.values() {
        let mut units: Vec<(&str, &Vec<usize>)> = units.iter().map(|(k, v)| (*k, v)).collect();
        units.sort_by_key(|(id, members)| (stable_hash(spec.seed, &[id.as_bytes()]), members[0]));
        let [n_train, n_val, _] = spec.allocate(units.len());
        for (rank, (_, members)) in units.iter().enumerate() {
            let which = if rank < n_train {
                0
            } else if rank < n_train + n_val {
                1
            } else {
                2
            };
            for &i in members.iter() {
                assignment[i] = which;
            }
        }
    }
    let part = |which: u8| -> Result<DatasetManifest> {
        let samples = manifest
            .samples
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == which)
            .map(|(s, _)| s.clone())
            .collect();
        let mut m = DatasetManifest::new(samples)?;
        m.root = manifest.root.clone();
        Ok(m)
    };
    Ok((part(0)?, part(1)?, part(2)?))
}
