use super::vocab::{IngredientVocabulary, VagueTarget};
use crate::error::{Error, Result};

/// Lowercases, drops parenthetical notes such as quantities, collapses
/// whitespace and trims surrounding punctuation.
pub fn clean_term(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let mut kept = String::with_capacity(lower.len());
    let mut depth = 0usize;
    for ch in lower.chars() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            _ if depth == 0 => kept.push(ch),
            _ => {}
        }
    }
    let collapsed = kept.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

/// Maps a raw ingredient term onto its canonical vocabulary entry.
///
/// Cleanup is followed by the plural map, the synonym map and finally the
/// vagueness map. Canonical terms are fixed points, so the function is
/// idempotent.
pub fn normalize_ingredient(raw: &str, vocab: &IngredientVocabulary) -> Result<String> {
    if raw.trim().is_empty() {
        return Err(Error::InvalidInput("empty ingredient term".into()));
    }
    let cleaned = clean_term(raw);
    if cleaned.is_empty() {
        return Err(Error::UnmappableIngredient(raw.to_string()));
    }
    let mut term = cleaned.as_str();
    if let Some(t) = vocab.plural_target(term) {
        term = t;
    }
    if let Some(t) = vocab.synonym_target(term) {
        term = t;
    }
    match vocab.vague_target(term) {
        Some(VagueTarget::Reject) => return Err(Error::RejectedTerm(term.to_string())),
        Some(VagueTarget::Canonical(t)) => term = t,
        None => {}
    }
    if vocab.is_canonical(term) {
        Ok(term.to_string())
    } else {
        Err(Error::UnmappableIngredient(cleaned))
    }
}
