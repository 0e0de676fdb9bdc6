mod data;
mod infer;
mod model;

use std::fs;
use std::path::{Path, PathBuf};

use nutrifuse_core::data::load_manifest;
use nutrifuse_core::embedding::{CachedEncoder, StubEncoder, TextEncoder};
use nutrifuse_core::ingredients::IngredientVocabulary;
use nutrifuse_core::DatasetManifest;

use crate::config::{EncoderKind, EncoderSection, RunConfig};
use crate::error::{CliError, CliResult};
use crate::Command;

pub fn dispatch(command: Command, cfg: &RunConfig) -> CliResult<()> {
    let out = cfg.out_dir()?.to_path_buf();
    // fail on a missing section before anything is written
    let run: fn(&RunConfig, &Path) -> CliResult<()> = match command {
        Command::Ingest => data::ingest,
        Command::Normalize => data::normalize,
        Command::EmbedCache => data::embed_cache,
        Command::Synth => data::synth,
        Command::Train => model::train,
        Command::Eval => model::eval,
        Command::Predict => model::predict,
        Command::VoteInfer => infer::vote_infer,
        Command::DialogueTemplate => infer::dialogue_template,
    };
    cfg.echo(&out)?;
    run(cfg, &out)
}

pub(crate) fn section<'a, T>(s: &'a Option<T>, name: &str) -> CliResult<&'a T> {
    s.as_ref()
        .ok_or_else(|| CliError::Config(format!("missing `[{name}]` section")))
}

pub(crate) fn vocabulary(cfg: &RunConfig) -> CliResult<IngredientVocabulary> {
    Ok(match &cfg.vocab.dir {
        Some(dir) => IngredientVocabulary::load_dir(dir)?,
        None => IngredientVocabulary::builtin(),
    })
}

pub(crate) fn manifest(path: &Path) -> CliResult<DatasetManifest> {
    Ok(load_manifest(path)?)
}

/// Encoder with its persistent cache loaded when the file exists.
pub(crate) struct Encoder {
    inner: CachedEncoder<Box<dyn TextEncoder>>,
    cache: Option<PathBuf>,
}

impl Encoder {
    pub fn open(sec: &EncoderSection) -> CliResult<Self> {
        let base: Box<dyn TextEncoder> = match sec.kind {
            EncoderKind::Stub => Box::new(StubEncoder::new(sec.dim, sec.seed)),
            EncoderKind::Clip => clip_encoder(sec)?,
        };
        let inner = CachedEncoder::new(base);
        if let Some(path) = &sec.cache {
            if path.exists() {
                let n = inner.load(path)?;
                log::info!("loaded {n} cached embeddings from {}", path.display());
            }
        }
        Ok(Self {
            inner,
            cache: sec.cache.clone(),
        })
    }

    pub fn get(&self) -> &dyn TextEncoder {
        &self.inner
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn persist(&self) -> CliResult<()> {
        if let Some(path) = &self.cache {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
            }
            self.inner.save(path)?;
        }
        Ok(())
    }
}

#[cfg(feature = "clip")]
fn clip_encoder(sec: &EncoderSection) -> CliResult<Box<dyn TextEncoder>> {
    let need = |p: &Option<PathBuf>, key: &str| {
        p.clone()
            .ok_or_else(|| CliError::Config(format!("encoder.kind = \"clip\" needs encoder.{key}")))
    };
    let enc = nutrifuse_core::embedding::ClipTextEncoder::from_files(
        need(&sec.weights, "weights")?,
        need(&sec.tokenizer, "tokenizer")?,
        sec.clip_config.as_deref(),
    )?;
    Ok(Box::new(enc))
}

#[cfg(not(feature = "clip"))]
fn clip_encoder(_: &EncoderSection) -> CliResult<Box<dyn TextEncoder>> {
    Err(CliError::Config(
        "encoder.kind = \"clip\" requires a build with the `clip` feature".into(),
    ))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
