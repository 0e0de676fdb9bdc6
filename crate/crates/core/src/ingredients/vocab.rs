use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Marker used in the vagueness file for non-food terms.
pub const REJECT_MARKER: &str = "REJECT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VagueTarget {
    Canonical(String),
    Reject,
}

/// Canonical ingredient names with their synonym sets and the surface-form
/// maps used during normalization.
#[derive(Debug, Clone, Default)]
pub struct IngredientVocabulary {
    canonical: BTreeSet<String>,
    synonyms: BTreeMap<String, Vec<String>>,
    synonym_of: HashMap<String, String>,
    plural_map: BTreeMap<String, String>,
    vagueness_map: BTreeMap<String, VagueTarget>,
}

fn is_clean(term: &str) -> bool {
    !term.is_empty()
        && term == term.trim()
        && term == term.to_lowercase()
        && !term.contains(['(', ')'])
}

impl IngredientVocabulary {
    pub fn new(
        rows: impl IntoIterator<Item = (String, Vec<String>)>,
        plural_map: impl IntoIterator<Item = (String, String)>,
        vagueness_map: impl IntoIterator<Item = (String, VagueTarget)>,
    ) -> Result<Self> {
        let bad = |msg: String| Error::InvalidVocabulary(msg);
        let mut vocab = Self::default();
        for (canon, syns) in rows {
            if !is_clean(&canon) {
                return Err(bad(format!("canonical `{canon}` must be lowercase, trimmed and free of parentheses")));
            }
            if !vocab.canonical.insert(canon.clone()) {
                return Err(bad(format!("canonical `{canon}` listed twice")));
            }
            vocab.synonyms.insert(canon, syns);
        }
        for (canon, syns) in &vocab.synonyms {
            for syn in syns {
                if !is_clean(syn) {
                    return Err(bad(format!("synonym `{syn}` of `{canon}` is not clean")));
                }
                if syn == canon {
                    return Err(bad(format!("`{canon}` lists itself as a synonym")));
                }
                if vocab.canonical.contains(syn) {
                    return Err(bad(format!("synonym `{syn}` of `{canon}` is itself canonical")));
                }
                if let Some(prev) = vocab.synonym_of.insert(syn.clone(), canon.clone()) {
                    return Err(bad(format!("synonym `{syn}` maps to both `{prev}` and `{canon}`")));
                }
            }
        }
        for (vague, target) in vagueness_map {
            if vocab.canonical.contains(&vague) {
                return Err(bad(format!("vague term `{vague}` is canonical")));
            }
            if let VagueTarget::Canonical(t) = &target {
                if !vocab.canonical.contains(t) {
                    return Err(bad(format!("vague term `{vague}` maps to unknown `{t}`")));
                }
            }
            vocab.vagueness_map.insert(vague, target);
        }
        for (surface, target) in plural_map {
            if vocab.canonical.contains(&surface) {
                return Err(bad(format!("plural form `{surface}` is canonical")));
            }
            let resolvable = vocab.canonical.contains(&target)
                || vocab.synonym_of.contains_key(&target)
                || vocab.vagueness_map.contains_key(&target);
            if !resolvable {
                return Err(bad(format!("plural form `{surface}` maps to unknown `{target}`")));
            }
            vocab.plural_map.insert(surface, target);
        }
        Ok(vocab)
    }

    /// Parses the three text assets: canonical rows (`name<TAB>syn|syn`),
    /// plural map and vagueness map (two tab-separated columns each).
    pub fn parse(canonical: &str, plural: &str, vagueness: &str) -> Result<Self> {
        let rows = data_lines(canonical)
            .map(|(line, fields)| {
                let canon = fields[0].to_string();
                let syns = match fields.get(1) {
                    Some(s) => s
                        .split('|')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect(),
                    None => Vec::new(),
                };
                if fields.len() > 2 {
                    return Err(Error::InvalidVocabulary(format!("canonical line {line}: too many columns")));
                }
                Ok((canon, syns))
            })
            .collect::<Result<Vec<_>>>()?;
        let plural = two_columns(plural, "plural")?;
        let vague = two_columns(vagueness, "vagueness")?
            .into_iter()
            .map(|(k, v)| {
                let target = if v == REJECT_MARKER {
                    VagueTarget::Reject
                } else {
                    VagueTarget::Canonical(v)
                };
                (k, target)
            })
            .collect::<Vec<_>>();
        Self::new(rows, plural, vague)
    }

    /// Loads `canonical.tsv`, `plural.tsv` and `vagueness.tsv` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        Self::parse(&read("canonical.tsv")?, &read("plural.tsv")?, &read("vagueness.tsv")?)
    }

    /// The vocabulary shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(
            include_str!("../../assets/vocab/canonical.tsv"),
            include_str!("../../assets/vocab/plural.tsv"),
            include_str!("../../assets/vocab/vagueness.tsv"),
        )
        .expect("bundled vocabulary is valid")
    }

    pub fn is_canonical(&self, term: &str) -> bool {
        self.canonical.contains(term)
    }

    pub fn canonical(&self) -> impl Iterator<Item = &str> {
        self.canonical.iter().map(String::as_str)
    }

    pub fn synonyms(&self, canonical: &str) -> &[String] {
        self.synonyms.get(canonical).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn synonym_target(&self, term: &str) -> Option<&str> {
        self.synonym_of.get(term).map(String::as_str)
    }

    pub fn plural_target(&self, term: &str) -> Option<&str> {
        self.plural_map.get(term).map(String::as_str)
    }

    pub fn vague_target(&self, term: &str) -> Option<&VagueTarget> {
        self.vagueness_map.get(term)
    }

    /// Every canonical name and synonym, the full set a text encoder may see.
    pub fn all_terms(&self) -> BTreeSet<String> {
        self.synonyms
            .iter()
            .flat_map(|(c, s)| std::iter::once(c).chain(s))
            .cloned()
            .collect()
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        if l.trim().is_empty() || l.trim_start().starts_with('#') {
            return None;
        }
        Some((i + 1, l.split('\t').map(str::trim).collect()))
    })
}

fn two_columns(text: &str, what: &str) -> Result<Vec<(String, String)>> {
    data_lines(text)
        .map(|(line, f)| match f.as_slice() {
            [k, v] if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), v.to_string())),
            _ => Err(Error::InvalidVocabulary(format!(
                "{what} line {line}: expected two tab-separated columns"
            ))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parses() {
        let v = IngredientVocabulary::builtin();
        assert!(v.is_canonical("lettuce"));
        assert!(v.synonyms("lettuce").iter().any(|s| s == "romaine lettuce"));
        assert_eq!(v.synonym_target("romaine lettuce"), Some("lettuce"));
        assert_eq!(v.vague_target("fork"), Some(&VagueTarget::Reject));
        assert!(v.canonical().count() >= 20);
    }

    #[test]
    fn synonym_shared_by_two_canonicals_rejected() {
        let err = IngredientVocabulary::parse("a\tx\nb\tx\n", "", "").unwrap_err();
        assert!(matches!(err, Error::InvalidVocabulary(_)));
    }

    #[test]
    fn self_synonym_rejected() {
        assert!(IngredientVocabulary::parse("a\ta\n", "", "").is_err());
    }

    #[test]
    fn unclean_canonical_rejected() {
        assert!(IngredientVocabulary::parse("Lettuce\n", "", "").is_err());
        assert!(IngredientVocabulary::parse("lettuce (200g)\n", "", "").is_err());
    }

    #[test]
    fn map_targets_must_resolve() {
        assert!(IngredientVocabulary::parse("a\n", "as\tb\n", "").is_err());
        assert!(IngredientVocabulary::parse("a\n", "", "stuff\tb\n").is_err());
        assert!(IngredientVocabulary::parse("a\n", "as\ta\n", "stuff\tREJECT\n").is_ok());
    }
}
