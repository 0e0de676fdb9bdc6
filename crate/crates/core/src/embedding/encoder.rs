use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::util::seeded_rng;

/// Output of a text encoder for one string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }
}

/// A frozen text encoder mapping one ingredient name to a fixed-size vector.
pub trait TextEncoder: Send + Sync {
    /// Identifier recorded in caches and checkpoints.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<EmbeddingVector>;

    /// Digest of the encoder's parameters; never changes for a frozen
    /// encoder.
    fn fingerprint(&self) -> [u8; 32];
}

impl<T: TextEncoder + ?Sized> TextEncoder for &T {
    fn id(&self) -> String {
        (**self).id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).encode(text)
    }
    fn fingerprint(&self) -> [u8; 32] {
        (**self).fingerprint()
    }
}

impl<T: TextEncoder + ?Sized> TextEncoder for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).encode(text)
    }
    fn fingerprint(&self) -> [u8; 32] {
        (**self).fingerprint()
    }
}

/// Deterministic stand-in encoder: every string maps to a pseudo-random
/// unit vector derived from a hash of the string. Distinct strings are
/// nearly orthogonal for moderate dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl StubEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

impl TextEncoder for StubEncoder {
    fn id(&self) -> String {
        format!("stub-hash-v1/dim={}/seed={}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        if self.dim == 0 {
            return Err(Error::EncoderUnavailable("stub encoder with zero dimension".into()));
        }
        let mut rng = seeded_rng(self.seed, &[b"stub-encoder", text.as_bytes()]);
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(EmbeddingVector(v.into_iter().map(|x| x as f32).collect()))
    }

    fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.id().as_bytes()).into()
    }
}

/// Embeds one ingredient name.
pub fn embed_ingredient(name: &str, encoder: &dyn TextEncoder) -> Result<EmbeddingVector> {
    if name.is_empty() {
        return Err(Error::InvalidInput("cannot embed an empty ingredient name".into()));
    }
    let v = encoder.encode(name)?;
    if v.dim() != encoder.dim() {
        return Err(Error::shape(encoder.dim(), v.dim()));
    }
    if v.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::EncoderUnavailable(format!("non-finite embedding for `{name}`")));
    }
    Ok(v)
}

/// Mean of the ingredient embeddings.
///
/// Names are visited in sorted order and summed in f64, so the result does
/// not depend on the order of the input list.
pub fn aggregate_ingredients(
    ingredients: &[String],
    encoder: &dyn TextEncoder,
) -> Result<EmbeddingVector> {
    aggregate_with(ingredients, encoder, false)
}

/// Like [`aggregate_ingredients`], optionally L2-normalizing each embedding
/// before averaging.
pub fn aggregate_with(
    ingredients: &[String],
    encoder: &dyn TextEncoder,
    l2_normalize: bool,
) -> Result<EmbeddingVector> {
    if ingredients.is_empty() {
        return Err(Error::EmptyIngredientList);
    }
    let mut names: Vec<&str> = ingredients.iter().map(String::as_str).collect();
    names.sort_unstable();
    let mut sum = vec![0.0f64; encoder.dim()];
    for name in &names {
        let v = embed_ingredient(name, encoder)?;
        let scale = if l2_normalize {
            1.0 / v.l2_norm().max(f64::MIN_POSITIVE)
        } else {
            1.0
        };
        for (s, &x) in sum.iter_mut().zip(v.values()) {
            *s += x as f64 * scale;
        }
    }
    let n = names.len() as f64;
    Ok(EmbeddingVector(sum.into_iter().map(|s| (s / n) as f32).collect()))
}
