use std::collections::HashMap;
use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::config::FusionConfig;
use crate::error::{Error, Result};

const HEADER_KEY: &str = "nutrifuse";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Configuration stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub fusion: FusionConfig,
    /// Text embedding width `E`.
    pub embedding_dim: usize,
    /// Fusion site width `C`.
    pub fusion_dim: usize,
    pub encoder_id: String,
    /// Embeddings were L2-normalised before averaging.
    #[serde(default)]
    pub l2_normalize: bool,
    pub dtype: String,
}

impl CheckpointHeader {
    /// Fails with [`Error::ConfigMismatch`] unless the stored configuration
    /// matches the expected one.
    pub fn check(&self, fusion: &FusionConfig, encoder_id: &str) -> Result<()> {
        let mut diffs = Vec::new();
        if self.fusion != *fusion {
            diffs.push(format!("fusion config {:?} != expected {:?}", self.fusion, fusion));
        }
        if self.encoder_id != encoder_id {
            diffs.push(format!("encoder `{}` != expected `{encoder_id}`", self.encoder_id));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigMismatch(diffs.join("; ")))
        }
    }
}

pub(crate) fn dtype_name(d: DType) -> &'static str {
    match d {
        DType::F64 => "f64",
        DType::F32 => "f32",
        DType::F16 => "f16",
        DType::BF16 => "bf16",
        _ => "other",
    }
}

pub(crate) fn parse_dtype(s: &str) -> Result<DType> {
    match s {
        "f64" => Ok(DType::F64),
        "f32" => Ok(DType::F32),
        other => Err(Error::Checkpoint(format!("unsupported dtype `{other}`"))),
    }
}

pub(crate) fn write(path: &Path, header: &CheckpointHeader, tensors: &[(String, Tensor)]) -> Result<()> {
    let meta = HashMap::from([(HEADER_KEY.to_string(), serde_json::to_string(header)?)]);
    let tmp = path.with_extension("tmp");
    safetensors::serialize_to_file(tensors.iter().map(|(k, v)| (k.as_str(), v)), Some(meta), &tmp)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads only the configuration header.
pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    header_from(&bytes, path)
}

fn header_from(bytes: &[u8], path: &Path) -> Result<CheckpointHeader> {
    let (_, meta) = safetensors::SafeTensors::read_metadata(bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let raw = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(HEADER_KEY))
        .ok_or_else(|| Error::Checkpoint(format!("{}: no model header", path.display())))?;
    let header: CheckpointHeader = serde_json::from_str(raw)?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: format version {} (supported: {CHECKPOINT_VERSION})",
            path.display(),
            header.version
        )));
    }
    Ok(header)
}

pub(crate) fn read(path: &Path, device: &Device) -> Result<(CheckpointHeader, HashMap<String, Tensor>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = header_from(&bytes, path)?;
    let tensors = candle_core::safetensors::load_buffer(&bytes, device)?;
    Ok((header, tensors))
}

/// Loads a plain safetensors table (e.g. converted torchvision weights).
pub(crate) fn read_plain(path: &Path, device: &Device) -> Result<HashMap<String, Tensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(candle_core::safetensors::load_buffer(&bytes, device)?)
}
