use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::IngredientVocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustnessOrder {
    #[default]
    ReplaceThenSample,
    SampleThenReplace,
}

/// Training-time ingredient noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub p_synonym: f64,
    pub p_subset: f64,
    pub seed: u64,
    pub order: RobustnessOrder,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            p_synonym: 0.5,
            p_subset: 0.5,
            seed: 0,
            order: RobustnessOrder::default(),
        }
    }
}

impl RobustnessConfig {
    pub fn disabled() -> Self {
        Self {
            p_synonym: 0.0,
            p_subset: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_synonym", self.p_synonym), ("p_subset", self.p_subset)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Replaces each ingredient, independently with probability `p_synonym`, by
/// a uniformly chosen synonym. Ingredients without synonyms pass through.
pub fn apply_synonym_replacement<R: Rng + ?Sized>(
    ingredients: &[String],
    vocab: &IngredientVocabulary,
    cfg: &RobustnessConfig,
    rng: &mut R,
) -> Vec<String> {
    ingredients
        .iter()
        .map(|ing| {
            let syns = vocab.synonyms(ing);
            if syns.is_empty() || !rng.random_bool(cfg.p_synonym) {
                return ing.clone();
            }
            syns.choose(rng).expect("non-empty").clone()
        })
        .collect()
}

/// With probability `p_subset`, keeps each element independently with
/// probability one half, redrawing until the subset is non-empty. Order is
/// preserved.
pub fn sample_ingredient_subset<R: Rng + ?Sized>(
    ingredients: &[String],
    cfg: &RobustnessConfig,
    rng: &mut R,
) -> Vec<String> {
    if ingredients.is_empty() || !rng.random_bool(cfg.p_subset) {
        return ingredients.to_vec();
    }
    loop {
        let kept: Vec<String> = ingredients
            .iter()
            .filter(|_| rng.random_bool(0.5))
            .cloned()
            .collect();
        if !kept.is_empty() {
            return kept;
        }
    }
}

/// Both transforms in the configured order.
pub fn apply_robustness<R: Rng + ?Sized>(
    ingredients: &[String],
    vocab: &IngredientVocabulary,
    cfg: &RobustnessConfig,
    rng: &mut R,
) -> Vec<String> {
    match cfg.order {
        RobustnessOrder::ReplaceThenSample => {
            let replaced = apply_synonym_replacement(ingredients, vocab, cfg, rng);
            sample_ingredient_subset(&replaced, cfg, rng)
        }
        RobustnessOrder::SampleThenReplace => {
            let sampled = sample_ingredient_subset(ingredients, cfg, rng);
            apply_synonym_replacement(&sampled, vocab, cfg, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn single_synonym_vocab() -> IngredientVocabulary {
        IngredientVocabulary::parse("lettuce\tromaine lettuce\ntomato\n", "", "").unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let v = IngredientVocabulary::builtin();
        let cfg = RobustnessConfig::disabled();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = s(&["lettuce", "tomato", "bun"]);
        for _ in 0..100 {
            assert_eq!(apply_robustness(&input, &v, &cfg, &mut rng), input);
        }
    }

    #[test]
    fn certain_replacement_with_singleton_set() {
        let v = single_synonym_vocab();
        let cfg = RobustnessConfig { p_synonym: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = apply_synonym_replacement(&s(&["lettuce", "tomato", "lettuce"]), &v, &cfg, &mut rng);
        assert_eq!(out, s(&["romaine lettuce", "tomato", "romaine lettuce"]));
    }

    #[test]
    fn replacement_frequency_near_half() {
        let v = single_synonym_vocab();
        let cfg = RobustnessConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 10_000;
        let replaced = (0..trials)
            .filter(|_| apply_synonym_replacement(&s(&["lettuce"]), &v, &cfg, &mut rng)[0] != "lettuce")
            .count();
        let freq = replaced as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn single_ingredient_always_kept() {
        let cfg = RobustnessConfig { p_subset: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            assert_eq!(sample_ingredient_subset(&s(&["bun"]), &cfg, &mut rng), s(&["bun"]));
        }
    }

    #[test]
    fn keep_rate_matches_subset_enumeration() {
        // Oracle: the 7 non-empty subsets of 3 items are equally likely;
        // count how many contain each item.
        let subsets: Vec<u32> = (1u32..8).collect();
        let oracle = subsets.iter().filter(|m| *m & 1 != 0).count() as f64 / subsets.len() as f64;
        assert!((oracle - 4.0 / 7.0).abs() < 1e-12);

        let cfg = RobustnessConfig { p_subset: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = s(&["a", "b", "c"]);
        let trials = 10_000;
        let mut kept = [0usize; 3];
        for _ in 0..trials {
            let out = sample_ingredient_subset(&input, &cfg, &mut rng);
            for (k, name) in input.iter().enumerate() {
                kept[k] += out.contains(name) as usize;
            }
        }
        for k in kept {
            let rate = k as f64 / trials as f64;
            assert!((rate - oracle).abs() <= 0.03, "{rate} vs {oracle}");
        }
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let cfg = RobustnessConfig { p_subset: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn subset_is_nonempty_ordered_subsequence(len in 1usize..8, seed in any::<u64>(), p in 0.0f64..=1.0) {
            let input: Vec<String> = (0..len).map(|i| format!("i{i}")).collect();
            let cfg = RobustnessConfig { p_subset: p, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = sample_ingredient_subset(&input, &cfg, &mut rng);
            prop_assert!(!out.is_empty());
            let mut it = input.iter();
            for o in &out {
                prop_assert!(it.any(|x| x == o));
            }
        }

        #[test]
        fn deterministic_given_seed(seed in any::<u64>()) {
            let v = IngredientVocabulary::builtin();
            let cfg = RobustnessConfig::default();
            let input = s(&["lettuce", "tomato", "bun", "cheese", "onion"]);
            let a = apply_robustness(&input, &v, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = apply_robustness(&input, &v, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn replacement_preserves_length(seed in any::<u64>()) {
            let v = IngredientVocabulary::builtin();
            let input = s(&["lettuce", "tomato", "unlisted"]);
            let out = apply_synonym_replacement(&input, &v, &RobustnessConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(out.len(), 3);
            prop_assert_eq!(&out[2], "unlisted");
        }
    }
}
