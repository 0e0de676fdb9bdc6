use std::path::Path;

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{Linear, VarBuilder};
use candle_transformers::models::clip::text_model::{Activation, ClipTextConfig, ClipTextTransformer};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use tokenizers::Tokenizer;

use super::encoder::{EmbeddingVector, TextEncoder};
use crate::error::{Error, Result};

/// Text-tower fields of a Hugging Face CLIP `config.json`, read either from
/// `text_config` or from the top level.
#[derive(Debug, Clone, Deserialize)]
pub struct ClipTextSettings {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub projection_dim: usize,
}

impl Default for ClipTextSettings {
    /// ViT-B/32 text tower.
    fn default() -> Self {
        let c = ClipTextConfig::vit_base_patch32();
        Self {
            vocab_size: c.vocab_size,
            hidden_size: c.embed_dim,
            intermediate_size: c.intermediate_size,
            max_position_embeddings: c.max_position_embeddings,
            num_hidden_layers: c.num_hidden_layers,
            num_attention_heads: c.num_attention_heads,
            projection_dim: c.projection_dim,
        }
    }
}

impl ClipTextSettings {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let section = v.get("text_config").cloned().unwrap_or(v);
        Ok(serde_json::from_value(section)?)
    }

    fn to_candle(&self) -> ClipTextConfig {
        ClipTextConfig {
            vocab_size: self.vocab_size,
            embed_dim: self.hidden_size,
            activation: Activation::QuickGelu,
            intermediate_size: self.intermediate_size,
            max_position_embeddings: self.max_position_embeddings,
            pad_with: None,
            num_hidden_layers: self.num_hidden_layers,
            num_attention_heads: self.num_attention_heads,
            projection_dim: self.projection_dim,
        }
    }
}

/// Frozen CLIP text tower plus its text projection. The embedding of a
/// string is the projected end-of-text state, as in CLIP retrieval.
pub struct ClipTextEncoder {
    transformer: ClipTextTransformer,
    projection: Linear,
    tokenizer: Tokenizer,
    settings: ClipTextSettings,
    fingerprint: [u8; 32],
}

impl ClipTextEncoder {
    /// `tensors` uses the `text_model.*` / `text_projection.weight` names of
    /// the Hugging Face checkpoints.
    pub fn new(
        tensors: std::collections::HashMap<String, Tensor>,
        tokenizer: Tokenizer,
        settings: ClipTextSettings,
    ) -> Result<Self> {
        let mut hasher = Sha256::new();
        let mut names: Vec<&String> = tensors.keys().collect();
        names.sort();
        for n in names {
            hasher.update(n.as_bytes());
            let t = tensors[n].to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
            for x in t {
                hasher.update(x.to_le_bytes());
            }
        }
        let fingerprint = hasher.finalize().into();
        let vb = VarBuilder::from_tensors(tensors, DType::F32, &Device::Cpu);
        let cfg = settings.to_candle();
        let transformer = ClipTextTransformer::new(vb.pp("text_model"), &cfg)
            .map_err(|e| Error::EncoderUnavailable(format!("CLIP text weights: {e}")))?;
        let projection = candle_nn::linear_no_bias(cfg.embed_dim, cfg.projection_dim, vb.pp("text_projection"))
            .map_err(|e| Error::EncoderUnavailable(format!("CLIP text projection: {e}")))?;
        Ok(Self {
            transformer,
            projection,
            tokenizer,
            settings,
            fingerprint,
        })
    }

    /// Loads safetensors weights, a `tokenizer.json` and an optional
    /// `config.json` (ViT-B/32 sizes when absent).
    pub fn from_files(weights: impl AsRef<Path>, tokenizer: impl AsRef<Path>, config: Option<&Path>) -> Result<Self> {
        let weights = weights.as_ref();
        let settings = match config {
            Some(p) => ClipTextSettings::from_json(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => ClipTextSettings::default(),
        };
        if !weights.exists() {
            return Err(Error::EncoderUnavailable(format!("{}: no such file", weights.display())));
        }
        let tensors = candle_core::safetensors::load(weights, &Device::Cpu)?;
        let tok = Tokenizer::from_file(tokenizer.as_ref())
            .map_err(|e| Error::EncoderUnavailable(format!("{}: {e}", tokenizer.as_ref().display())))?;
        Self::new(tensors, tok, settings)
    }

    fn token_ids(&self, text: &str) -> Result<Vec<u32>> {
        let enc = self
            .tokenizer
            .encode(text, true)
            .map_err(|e| Error::EncoderUnavailable(format!("tokenizer: {e}")))?;
        let mut ids = enc.get_ids().to_vec();
        let max = self.settings.max_position_embeddings;
        if ids.len() > max {
            // keep the end-of-text token, which the pooling relies on
            let last = *ids.last().expect("non-empty");
            ids.truncate(max);
            ids[max - 1] = last;
        }
        if ids.is_empty() {
            return Err(Error::EncoderUnavailable(format!("tokenizer produced no tokens for `{text}`")));
        }
        Ok(ids)
    }
}

impl TextEncoder for ClipTextEncoder {
    fn id(&self) -> String {
        let hex: String = self.fingerprint[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!("clip-text/{hex}/dim={}", self.settings.projection_dim)
    }

    fn dim(&self) -> usize {
        self.settings.projection_dim
    }

    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        let ids = self.token_ids(text)?;
        let n = ids.len();
        let input = Tensor::from_vec(ids, (1, n), &Device::Cpu)?;
        let pooled = self.transformer.forward(&input)?;
        let out = self.projection.forward(&pooled)?.squeeze(0)?.to_vec1::<f32>()?;
        Ok(EmbeddingVector(out))
    }

    fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_nn::VarMap;
    use tokenizers::models::wordlevel::WordLevel;
    use tokenizers::pre_tokenizers::whitespace::Whitespace;

    const WORDS: [&str; 6] = ["[unk]", "bun", "lettuce", "beef", "patty", "[eot]"];

    fn tiny() -> ClipTextEncoder {
        let settings = ClipTextSettings {
            vocab_size: WORDS.len(),
            hidden_size: 8,
            intermediate_size: 16,
            max_position_embeddings: 4,
            num_hidden_layers: 1,
            num_attention_heads: 2,
            projection_dim: 6,
        };
        let vocab = WORDS.iter().enumerate().map(|(i, w)| (w.to_string(), i as u32)).collect();
        let model = WordLevel::builder().vocab(vocab).unk_token("[unk]".into()).build().unwrap();
        let mut tok = Tokenizer::new(model);
        tok.with_pre_tokenizer(Some(Whitespace {}));
        tok.with_post_processor(Some(
            tokenizers::processors::template::TemplateProcessing::builder()
                .try_single("$A [eot]")
                .unwrap()
                .special_tokens(vec![("[eot]", 5)])
                .build()
                .unwrap(),
        ));
        // random weights under the Hugging Face names
        let map = VarMap::new();
        let vb = VarBuilder::from_varmap(&map, DType::F32, &Device::Cpu);
        let cfg = settings.to_candle();
        ClipTextTransformer::new(vb.pp("text_model"), &cfg).unwrap();
        candle_nn::linear_no_bias(cfg.embed_dim, cfg.projection_dim, vb.pp("text_projection")).unwrap();
        let tensors = map
            .data()
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        ClipTextEncoder::new(tensors, tok, settings).unwrap()
    }

    #[test]
    fn encodes_to_projection_dim_deterministically() {
        let enc = tiny();
        let a = enc.encode("beef patty").unwrap();
        assert_eq!(a.dim(), 6);
        assert_eq!(a, enc.encode("beef patty").unwrap());
        assert_ne!(a, enc.encode("lettuce").unwrap());
        assert!(a.values().iter().all(|x| x.is_finite()));
        assert!(enc.id().starts_with("clip-text/"));
    }

    #[test]
    fn long_inputs_are_truncated_to_the_context() {
        let enc = tiny();
        let ids = enc.token_ids("bun bun bun bun bun bun").unwrap();
        assert_eq!(ids, vec![1, 1, 1, 5]);
        assert!(enc.encode("bun bun bun bun bun bun").is_ok());
    }

    #[test]
    fn config_json_reads_text_section() {
        let s = ClipTextSettings::from_json(
            r#"{"text_config": {"vocab_size": 10, "hidden_size": 4, "intermediate_size": 8,
                "max_position_embeddings": 5, "num_hidden_layers": 1, "num_attention_heads": 1,
                "projection_dim": 3, "extra": true}}"#,
        )
        .unwrap();
        assert_eq!((s.hidden_size, s.projection_dim), (4, 3));
    }

    #[test]
    fn missing_weights_reported() {
        let r = ClipTextEncoder::from_files("/nonexistent/clip.safetensors", "/nonexistent/tok.json", None);
        assert!(matches!(r, Err(Error::EncoderUnavailable(_))));
    }
}
