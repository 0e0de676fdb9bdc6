use std::collections::BTreeSet;
use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use image::DynamicImage;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingredients::{normalize_ingredient, IngredientVocabulary};
use crate::util::seeded_rng;

/// A large multimodal model reachable through one request type.
pub trait MultimodalClient: Send + Sync {
    fn complete(&self, image_png: &[u8], prompt: &str) -> Result<String>;
}

impl<T: MultimodalClient + ?Sized> MultimodalClient for &T {
    fn complete(&self, image_png: &[u8], prompt: &str) -> Result<String> {
        (**self).complete(image_png, prompt)
    }
}

impl<T: MultimodalClient + ?Sized> MultimodalClient for Box<T> {
    fn complete(&self, image_png: &[u8], prompt: &str) -> Result<String> {
        (**self).complete(image_png, prompt)
    }
}

pub fn encode_png(image: &DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// OpenAI-compatible chat-completions endpoint. The bearer token is read
/// from the environment variable named by `token_env` on every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpClientConfig {
    pub url: String,
    pub model: String,
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_token_env() -> String {
    "NUTRIFUSE_LMM_TOKEN".into()
}

fn default_timeout() -> u64 {
    120
}

pub struct HttpClient {
    cfg: HttpClientConfig,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(cfg: HttpClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        Self { cfg, agent }
    }
}

impl MultimodalClient for HttpClient {
    fn complete(&self, image_png: &[u8], prompt: &str) -> Result<String> {
        let data_url = format!(
            "data:image/png;base64,{}",
            base64::engine::general_purpose::STANDARD.encode(image_png)
        );
        let body = serde_json::json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ],
            }],
        });
        let mut req = self
            .agent
            .post(&self.cfg.url)
            .header("Content-Type", "application/json");
        if let Ok(token) = std::env::var(&self.cfg.token_env) {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req
            .send(serde_json::to_string(&body)?)
            .map_err(|e| Error::Client(format!("{}: {e}", self.cfg.url)))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Client(e.to_string()))?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Client(format!("response is not JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Client("response lacks choices[0].message.content".into()))
    }
}

/// Returns the same fixed list for every image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleClient {
    pub ingredients: Vec<String>,
}

impl OracleClient {
    pub fn new(ingredients: Vec<String>) -> Self {
        Self { ingredients }
    }
}

impl MultimodalClient for OracleClient {
    fn complete(&self, _: &[u8], _: &str) -> Result<String> {
        Ok(self.ingredients.join(", "))
    }
}

/// Error model of [`NoisyClient`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Chance that a true ingredient is missing from one reply.
    pub false_negative_rate: f64,
    /// Chance that each persistent distractor shows up in one reply.
    pub false_positive_rate: f64,
    /// Number of wrong ingredients tied to the dish; they recur across views.
    pub distractors: usize,
    /// Chance of one extra, freshly drawn wrong ingredient per reply.
    pub junk_rate: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            false_negative_rate: 0.2,
            false_positive_rate: 0.3,
            distractors: 2,
            junk_rate: 0.2,
            seed: 0,
        }
    }
}

/// Seeded noisy oracle. Replies are a pure function of the seed, the true
/// list and the image bytes, so distinct views give independent draws while
/// the whole run stays reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyClient {
    truth: Vec<String>,
    distractors: Vec<String>,
    pool: Vec<String>,
    noise: NoiseConfig,
}

impl NoisyClient {
    /// Distractors and junk are drawn from `vocab` minus the true list.
    pub fn new(truth: Vec<String>, vocab: &IngredientVocabulary, noise: NoiseConfig) -> Self {
        let truth_set: BTreeSet<&str> = truth.iter().map(String::as_str).collect();
        let pool: Vec<String> = vocab
            .canonical()
            .filter(|c| !truth_set.contains(c))
            .map(str::to_string)
            .collect();
        let key = truth.join("\u{1f}");
        let mut rng = seeded_rng(noise.seed, &[b"distractors", key.as_bytes()]);
        let distractors = pool
            .choose_multiple(&mut rng, noise.distractors.min(pool.len()))
            .cloned()
            .collect();
        Self {
            truth,
            distractors,
            pool,
            noise,
        }
    }

    pub fn distractors(&self) -> &[String] {
        &self.distractors
    }
}

impl MultimodalClient for NoisyClient {
    fn complete(&self, image_png: &[u8], prompt: &str) -> Result<String> {
        let mut rng = seeded_rng(self.noise.seed, &[b"reply", image_png, prompt.as_bytes()]);
        let mut out: Vec<&str> = Vec::new();
        for t in &self.truth {
            if !rng.random_bool(self.noise.false_negative_rate) {
                out.push(t);
            }
        }
        for d in &self.distractors {
            if rng.random_bool(self.noise.false_positive_rate) {
                out.push(d);
            }
        }
        if rng.random_bool(self.noise.junk_rate) {
            if let Some(j) = self.pool.choose(&mut rng) {
                out.push(j);
            }
        }
        Ok(out.join(", "))
    }
}

/// Outcome of parsing one reply.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedReply {
    pub ingredients: BTreeSet<String>,
    pub rejected: Vec<String>,
    pub unmapped: Vec<String>,
}

fn strip_item(raw: &str) -> &str {
    let s = raw.trim();
    let s = s.trim_start_matches(|c: char| matches!(c, '-' | '*' | '•' | '·') || c.is_whitespace());
    // "1." / "2)" enumerations
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    let s = if digits > 0 && s[digits..].starts_with(['.', ')']) {
        s[digits + 1..].trim_start()
    } else {
        s
    };
    let s = s.strip_prefix("and ").unwrap_or(s);
    s.trim_end_matches(['.', '!']).trim()
}

/// Splits a free-text reply on commas, semicolons and newlines and maps
/// each item to a canonical ingredient. Rejected terms are dropped. Unknown
/// terms are dropped with a warning, or fail the parse in strict mode, as
/// does an empty reply.
pub fn parse_reply(reply: &str, vocab: &IngredientVocabulary, strict: bool) -> Result<ParsedReply> {
    let mut out = ParsedReply::default();
    let items: Vec<&str> = reply
        .split([',', ';', '\n'])
        .map(strip_item)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        if strict {
            return Err(Error::ReplyParse("reply contains no ingredient terms".into()));
        }
        if !reply.trim().is_empty() {
            log::warn!("could not parse client reply {reply:?}");
        }
        return Ok(out);
    }
    for item in items {
        match normalize_ingredient(item, vocab) {
            Ok(c) => {
                out.ingredients.insert(c);
            }
            Err(Error::RejectedTerm(_)) => out.rejected.push(item.to_string()),
            Err(Error::UnmappableIngredient(_)) | Err(Error::InvalidInput(_)) => {
                if strict {
                    return Err(Error::ReplyParse(format!("`{item}` is not a known ingredient")));
                }
                log::warn!("dropping unknown ingredient term {item:?}");
                out.unmapped.push(item.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// One client query with parsing: the canonical ingredient set for `image`.
pub fn query_ingredients(
    image: &DynamicImage,
    client: &dyn MultimodalClient,
    vocab: &IngredientVocabulary,
    prompt: &str,
    strict: bool,
) -> Result<BTreeSet<String>> {
    let reply = client.complete(&encode_png(image)?, prompt)?;
    Ok(parse_reply(&reply, vocab, strict)?.ingredients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn img() -> DynamicImage {
        DynamicImage::ImageRgb8(RgbImage::new(4, 4))
    }

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    struct Fixed(&'static str);
    impl MultimodalClient for Fixed {
        fn complete(&self, _: &[u8], _: &str) -> Result<String> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn utensils_are_dropped() {
        let v = IngredientVocabulary::builtin();
        let got = query_ingredients(&img(), &Fixed("lettuce, tomato, fork"), &v, "p", false).unwrap();
        assert_eq!(got, set(&["lettuce", "tomato"]));
    }

    #[test]
    fn empty_reply_is_empty_set_unless_strict() {
        let v = IngredientVocabulary::builtin();
        assert!(query_ingredients(&img(), &Fixed(""), &v, "p", false).unwrap().is_empty());
        assert!(matches!(
            query_ingredients(&img(), &Fixed(""), &v, "p", true),
            Err(Error::ReplyParse(_))
        ));
    }

    #[test]
    fn plural_is_normalized() {
        let v = IngredientVocabulary::builtin();
        assert_eq!(query_ingredients(&img(), &Fixed("Tomatoes"), &v, "p", false).unwrap(), set(&["tomato"]));
    }

    #[test]
    fn list_markup_is_stripped() {
        let v = IngredientVocabulary::builtin();
        let r = parse_reply("- Lettuce\n* tomatoes;\n3. bun and cheese.\nand pickles", &v, false).unwrap();
        assert!(r.ingredients.contains("lettuce"));
        assert!(r.ingredients.contains("tomato"));
        assert!(r.unmapped.iter().any(|u| u.contains("bun and cheese")));
    }

    #[test]
    fn unknown_terms_fail_in_strict_mode() {
        let v = IngredientVocabulary::builtin();
        assert!(parse_reply("lettuce, unobtainium", &v, false).unwrap().unmapped == vec!["unobtainium"]);
        assert!(matches!(parse_reply("lettuce, unobtainium", &v, true), Err(Error::ReplyParse(_))));
    }

    #[test]
    fn oracle_returns_truth() {
        let v = IngredientVocabulary::builtin();
        let c = OracleClient::new(vec!["bun".into(), "lettuce".into()]);
        assert_eq!(query_ingredients(&img(), &c, &v, "p", true).unwrap(), set(&["bun", "lettuce"]));
    }

    #[test]
    fn noisy_client_is_reproducible_and_image_dependent() {
        let v = IngredientVocabulary::builtin();
        let truth = vec!["bun".to_string(), "lettuce".to_string(), "tomato".to_string()];
        let c = NoisyClient::new(truth.clone(), &v, NoiseConfig { seed: 4, ..Default::default() });
        assert_eq!(c.distractors().len(), 2);
        assert!(c.distractors().iter().all(|d| !truth.contains(d)));
        let a = c.complete(b"image-a", "p").unwrap();
        assert_eq!(a, c.complete(b"image-a", "p").unwrap());
        let replies: BTreeSet<String> = (0..20u8).map(|i| c.complete(&[i], "p").unwrap()).collect();
        assert!(replies.len() > 1);
    }
}
