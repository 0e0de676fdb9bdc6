use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use nutrifuse_core::data::{SplitSpec, SyntheticSpec};
use nutrifuse_core::eval::Protocol;
use nutrifuse_core::inference::{AugmentationSpec, HttpClientConfig, NoiseConfig, VoteConfig};
use nutrifuse_core::model::FusionConfig;
use nutrifuse_core::training::{IngredientMode, TrainConfig};

use crate::error::CliError;

/// Name of the resolved-config echo written into every output directory.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

/// One file for every command; each command reads its own section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub vocab: VocabSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<NormalizeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_cache: Option<EmbedCacheSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_infer: Option<VoteInferSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_template: Option<DialogueSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Stub,
    Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    /// Stub encoder output dimension.
    pub dim: usize,
    /// Stub encoder seed. Not tied to the run seed, so checkpoints stay
    /// loadable across runs.
    pub seed: u64,
    /// Persistent embedding cache, read before and written after the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    /// CLIP text weights (safetensors), tokenizer and config.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokenizer: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_config: Option<PathBuf>,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Stub,
            dim: 512,
            seed: 0,
            cache: None,
            weights: None,
            tokenizer: None,
            clip_config: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    /// Directory with canonical.tsv, plural.tsv and vagueness.tsv; the
    /// bundled vocabulary when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    /// Image records in manifest line format.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    /// Video records: video_id, frame_count, nutrition, ingredients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub videos: Option<PathBuf>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Map ingredient lists onto canonical names, dropping rejected terms.
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default)]
    pub split: SplitSpec,
}

fn default_stride() -> usize {
    5
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizeSection {
    /// One raw term per line.
    pub input: PathBuf,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedCacheSection {
    /// Manifests whose ingredient names are embedded.
    #[serde(default)]
    pub manifests: Vec<PathBuf>,
    /// Also embed every vocabulary term, synonyms included.
    #[serde(default = "yes")]
    pub include_vocabulary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default)]
    pub data: SyntheticSpec,
    #[serde(default)]
    pub split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    /// Frame sampling stride for protocol 1.
    #[serde(default = "one")]
    pub stride: u64,
    #[serde(default = "default_ingredient_mode")]
    pub ingredients: IngredientMode,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_protocol() -> Protocol {
    Protocol::SingleImage
}

fn one() -> u64 {
    1
}

fn default_ingredient_mode() -> IngredientMode {
    IngredientMode::Manifest
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub checkpoint: PathBuf,
    pub image: PathBuf,
    /// Raw ingredient terms; normalised before embedding. Empty means
    /// image-only prediction.
    #[serde(default)]
    pub ingredients: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientSection {
    /// Replies with the manifest's ingredient list for every view.
    Oracle,
    /// Seeded noisy version of the manifest list.
    Noisy {
        #[serde(default)]
        noise: NoiseConfig,
    },
    Http(HttpClientConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteInferSection {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub client: ClientSection,
    #[serde(default)]
    pub augmentation: AugmentationSpec,
    #[serde(default)]
    pub vote: VoteConfig,
    /// Prompt file; the bundled ingredient prompt when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PathBuf>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueSection {
    pub calories: f64,
    pub fat: f64,
    pub carbohydrates: f64,
    pub protein: f64,
    #[serde(default = "default_turns")]
    pub turns: usize,
    /// Template file with the five placeholders; the bundled template when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
}

fn default_turns() -> usize {
    3
}

/// Seed keys filled from the top-level seed when the file leaves them out.
const SEED_PATHS: &[&str] = &[
    "ingest.split.seed",
    "synth.data.seed",
    "synth.split.seed",
    "train.config.seed",
    "train.config.robustness.seed",
    "vote_infer.augmentation.seed",
    "vote_infer.client.noise.seed",
];

/// Reads `path` (or an empty config), applies `--set` overrides, `--seed`
/// and `--out`, then deserialises with unknown keys rejected.
pub fn load(
    path: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<RunConfig, CliError> {
    let mut root = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    if let Some(p) = path {
        resolve_relative_paths(&mut root, p.parent().unwrap_or(Path::new("")));
    }
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{s}`")))?;
        set_path(&mut root, key.trim(), parse_value(raw.trim()))?;
    }
    if let Some(seed) = seed {
        root.insert("seed".into(), Value::Integer(seed as i64));
    }
    if let Some(out) = out {
        root.insert("out".into(), Value::String(out.display().to_string()));
    }
    let top_seed = root.get("seed").cloned().unwrap_or(Value::Integer(0));
    for p in SEED_PATHS {
        fill_missing(&mut root, p, &top_seed);
    }
    Value::Table(root)
        .try_into::<RunConfig>()
        .map_err(|e| CliError::Config(e.to_string()))
}

/// `--set` values are TOML literals; anything that does not parse is a
/// bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Sets `path` to `value` when its top-level section exists and the key is
/// absent, creating intermediate tables.
fn fill_missing(root: &mut Table, path: &str, value: &Value) {
    let parts: Vec<&str> = path.split('.').collect();
    if !root.contains_key(parts[0]) {
        return;
    }
    if path.starts_with("vote_infer.client.") {
        let kind = root
            .get("vote_infer")
            .and_then(|v| v.get("client"))
            .and_then(|c| c.get("kind"))
            .and_then(Value::as_str);
        if kind != Some("noisy") {
            return;
        }
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        table = match table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
        {
            Some(t) => t,
            None => return,
        };
    }
    table
        .entry(parts[parts.len() - 1].to_string())
        .or_insert_with(|| value.clone());
}

/// Keys whose string values are file paths, resolved against the config
/// file's directory.
const PATH_KEYS: &[&str] = &[
    "encoder.cache",
    "encoder.weights",
    "encoder.tokenizer",
    "encoder.clip_config",
    "vocab.dir",
    "ingest.records",
    "ingest.videos",
    "normalize.input",
    "train.train_manifest",
    "train.val_manifest",
    "train.config.pretrained_weights",
    "eval.checkpoint",
    "eval.manifest",
    "predict.checkpoint",
    "predict.image",
    "vote_infer.checkpoint",
    "vote_infer.manifest",
    "vote_infer.prompt",
    "dialogue_template.template",
    "out",
];

fn lookup_mut<'a>(root: &'a mut Table, key: &str) -> Option<&'a mut Value> {
    let (head, rest) = match key.split_once('.') {
        Some((h, r)) => (h, Some(r)),
        None => (key, None),
    };
    let v = root.get_mut(head)?;
    match rest {
        None => Some(v),
        Some(r) => lookup_mut(v.as_table_mut()?, r),
    }
}

fn resolve_relative_paths(root: &mut Table, base: &Path) {
    let fix = |v: &mut Value| {
        if let Value::String(s) = v {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = base.join(p).display().to_string();
            }
        }
    };
    for key in PATH_KEYS {
        if let Some(v) = lookup_mut(root, key) {
            fix(v);
        }
    }
    if let Some(list) = root
        .get_mut("embed_cache")
        .and_then(|t| t.get_mut("manifests"))
        .and_then(Value::as_array_mut)
    {
        list.iter_mut().for_each(fix);
    }
}

impl RunConfig {
    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory: set `out` or pass --out".into()))
    }

    /// Writes the resolved configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        let text = toml::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
