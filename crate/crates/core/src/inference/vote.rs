use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteConfig {
    pub tau: usize,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self { tau: 4 }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 {
            return Err(Error::InvalidConfig("tau must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ingredient sets from the `K` views and how many views name each item.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngredientPredictionSet {
    pub per_augmentation: Vec<BTreeSet<String>>,
    pub counts: BTreeMap<String, usize>,
}

impl IngredientPredictionSet {
    pub fn new(per_augmentation: Vec<BTreeSet<String>>) -> Self {
        let mut counts = BTreeMap::new();
        for set in &per_augmentation {
            for ing in set {
                *counts.entry(ing.clone()).or_insert(0) += 1;
            }
        }
        Self {
            per_augmentation,
            counts,
        }
    }

    pub fn k(&self) -> usize {
        self.per_augmentation.len()
    }

    pub fn union(&self) -> BTreeSet<String> {
        self.counts.keys().cloned().collect()
    }
}

/// Ingredients named by at least `tau` views, without the fallback.
pub fn threshold_vote(preds: &IngredientPredictionSet, tau: usize) -> BTreeSet<String> {
    preds
        .counts
        .iter()
        .filter(|(_, &n)| n >= tau)
        .map(|(k, _)| k.clone())
        .collect()
}

/// [`threshold_vote`], falling back to every ingredient with the maximum
/// count when nothing reaches `tau`. The flag reports the fallback.
pub fn majority_vote_detailed(preds: &IngredientPredictionSet, cfg: &VoteConfig) -> (BTreeSet<String>, bool) {
    let voted = threshold_vote(preds, cfg.tau);
    if !voted.is_empty() {
        return (voted, false);
    }
    let max = preds.counts.values().copied().max().unwrap_or(0);
    let fallback = preds
        .counts
        .iter()
        .filter(|(_, &n)| n == max && n > 0)
        .map(|(k, _)| k.clone())
        .collect();
    (fallback, true)
}

pub fn majority_vote(preds: &IngredientPredictionSet, cfg: &VoteConfig) -> BTreeSet<String> {
    majority_vote_detailed(preds, cfg).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(v: &[&[&str]]) -> IngredientPredictionSet {
        IngredientPredictionSet::new(v.iter().map(|s| s.iter().map(|x| x.to_string()).collect()).collect())
    }

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bun_in_four_pickle_in_three() {
        let p = sets(&[&["bun", "pickle"], &["bun", "pickle"], &["bun", "pickle"], &["bun"], &["lettuce"]]);
        assert_eq!(p.counts["bun"], 4);
        assert_eq!(majority_vote(&p, &VoteConfig { tau: 4 }), set(&["bun"]));
    }

    #[test]
    fn tau_one_is_union() {
        let p = sets(&[&["a"], &["b", "c"], &[], &["a", "d"]]);
        assert_eq!(majority_vote(&p, &VoteConfig { tau: 1 }), p.union());
    }

    #[test]
    fn fallback_keeps_all_maxima() {
        let p = sets(&[&["a"], &["b"], &["c", "a"], &["d", "b"], &["e"]]);
        let (v, fb) = majority_vote_detailed(&p, &VoteConfig { tau: 4 });
        assert!(fb);
        assert_eq!(v, set(&["a", "b"]));
    }

    #[test]
    fn all_empty_sets_vote_nothing() {
        let p = sets(&[&[], &[]]);
        assert!(majority_vote(&p, &VoteConfig::default()).is_empty());
    }

    #[test]
    fn random_instances_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let pool = ["a", "b", "c", "d", "e", "f", "g"];
        for _ in 0..10_000 {
            let k = rng.random_range(1..=10);
            let sets: Vec<BTreeSet<String>> = (0..k)
                .map(|_| pool.iter().filter(|_| rng.random_bool(0.35)).map(|s| s.to_string()).collect())
                .collect();
            let tau = rng.random_range(1..=k + 1);
            let got = majority_vote(&IngredientPredictionSet::new(sets.clone()), &VoteConfig { tau });

            let count = |x: &str| sets.iter().filter(|s| s.contains(x)).count();
            let mut want: BTreeSet<String> = pool.iter().filter(|x| count(x) >= tau).map(|s| s.to_string()).collect();
            if want.is_empty() {
                let max = pool.iter().map(|x| count(x)).max().unwrap();
                if max > 0 {
                    want = pool.iter().filter(|x| count(x) == max).map(|s| s.to_string()).collect();
                }
            }
            assert_eq!(got, want);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = Vec<BTreeSet<String>>> {
            proptest::collection::vec(proptest::collection::btree_set("[a-f]", 0..5), 1..9)
        }

        proptest! {
            #[test]
            fn counts_bounded_by_k(sets in instance()) {
                let p = IngredientPredictionSet::new(sets);
                for (ing, &n) in &p.counts {
                    prop_assert!(n > 0 && n <= p.k());
                    prop_assert_eq!(n, p.per_augmentation.iter().filter(|s| s.contains(ing)).count());
                }
            }

            #[test]
            fn threshold_is_monotone(sets in instance(), t1 in 1usize..10, t2 in 1usize..10) {
                let p = IngredientPredictionSet::new(sets);
                let (lo, hi) = (t1.min(t2), t1.max(t2));
                prop_assert!(threshold_vote(&p, hi).is_subset(&threshold_vote(&p, lo)));
            }

            #[test]
            fn result_within_union(sets in instance(), tau in 1usize..10) {
                let p = IngredientPredictionSet::new(sets);
                let voted = majority_vote(&p, &VoteConfig { tau });
                prop_assert!(voted.is_subset(&p.union()));
            }

            #[test]
            fn order_invariant(mut sets in instance(), tau in 1usize..10, r in 0usize..8) {
                let a = majority_vote_detailed(&IngredientPredictionSet::new(sets.clone()), &VoteConfig { tau });
                let n = sets.len();
                sets.rotate_left(r % n);
                sets.reverse();
                prop_assert_eq!(a, majority_vote_detailed(&IngredientPredictionSet::new(sets), &VoteConfig { tau }));
            }
        }
    }
}
