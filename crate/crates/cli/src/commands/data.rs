use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nutrifuse_core::data::{
    extract_frames, generate_synthetic, save_manifest, split_dataset, SplitSpec, VideoRecord,
};
use nutrifuse_core::ingredients::{normalize_ingredient, IngredientVocabulary};
use nutrifuse_core::{DatasetManifest, Error};

use super::{manifest, section, vocabulary, write_text, Encoder};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub fn ingest(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.ingest, "ingest")?;
    let vocab = vocabulary(cfg)?;
    let mut samples = Vec::new();
    if let Some(path) = &sec.records {
        let m = manifest(path)?;
        for mut s in m.samples.clone() {
            s.image_ref = absolute(&m.image_path(&s));
            samples.push(s);
        }
    }
    if let Some(path) = &sec.videos {
        let videos = read_videos(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for mut s in extract_frames(&videos, sec.stride)? {
            s.image_ref = absolute(&base.join(&s.image_ref));
            samples.push(s);
        }
    }
    if samples.is_empty() {
        return Err(CliError::Config("ingest needs `records` or `videos`".into()));
    }
    if sec.normalize {
        for s in &mut samples {
            s.ingredients = normalize_list(&s.ingredients, &vocab)
                .map_err(|e| CliError::Data(format!("sample `{}`: {e}", s.sample_id)))?;
        }
    }
    let all = DatasetManifest::new(samples)?;
    write_splits(&all, &sec.split, out)
}

fn absolute(p: &Path) -> String {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string()
}

fn read_videos(path: &Path) -> CliResult<Vec<VideoRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Canonical names in first-seen order; rejected terms are dropped.
fn normalize_list(raw: &[String], vocab: &IngredientVocabulary) -> nutrifuse_core::Result<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in raw {
        match normalize_ingredient(r, vocab) {
            Ok(c) => {
                if seen.insert(c.clone()) {
                    out.push(c);
                }
            }
            Err(Error::RejectedTerm(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn write_splits(all: &DatasetManifest, spec: &SplitSpec, out: &Path) -> CliResult<()> {
    let (train, val, test) = split_dataset(all, spec)?;
    for (name, m) in [("train", &train), ("val", &val), ("test", &test)] {
        save_manifest(m, out.join(format!("{name}.jsonl")))?;
    }
    log::info!(
        "wrote {} samples: {} train / {} val / {} test",
        all.len(),
        train.len(),
        val.len(),
        test.len()
    );
    Ok(())
}

pub fn normalize(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.normalize, "normalize")?;
    let vocab = vocabulary(cfg)?;
    let text = fs::read_to_string(&sec.input)
        .map_err(|e| CliError::Data(format!("{}: {e}", sec.input.display())))?;
    let mut tsv = String::from("raw\tcanonical\n");
    let (mut mapped, mut rejected, mut unmapped) = (0, 0, 0);
    for raw in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let target = match normalize_ingredient(raw, &vocab) {
            Ok(c) => {
                mapped += 1;
                c
            }
            Err(Error::RejectedTerm(_)) => {
                rejected += 1;
                "REJECT".into()
            }
            Err(e @ Error::UnmappableIngredient(_)) => {
                if sec.strict {
                    return Err(e.into());
                }
                unmapped += 1;
                "UNMAPPED".into()
            }
            Err(e) => return Err(e.into()),
        };
        tsv.push_str(&format!("{raw}\t{target}\n"));
    }
    write_text(&out.join("normalized.tsv"), &tsv)?;
    log::info!("{mapped} mapped, {rejected} rejected, {unmapped} unmapped");
    Ok(())
}

pub fn embed_cache(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.embed_cache, "embed_cache")?;
    let mut enc_cfg = cfg.encoder.clone();
    if enc_cfg.cache.is_none() {
        enc_cfg.cache = Some(out.join("embeddings.bin"));
    }
    let encoder = Encoder::open(&enc_cfg)?;
    let mut names = BTreeSet::new();
    for path in &sec.manifests {
        for s in &manifest(path)?.samples {
            names.extend(s.ingredients.iter().cloned());
        }
    }
    if sec.include_vocabulary {
        names.extend(vocabulary(cfg)?.all_terms());
    }
    for n in &names {
        encoder.get().encode(n)?;
    }
    encoder.persist()?;
    log::info!(
        "{} names embedded, cache holds {} entries at {}",
        names.len(),
        encoder.len(),
        enc_cfg.cache.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    );
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.synth, "synth")?;
    let vocab = vocabulary(cfg)?;
    let data = generate_synthetic(&sec.data, &vocab)?;
    data.write_to(out)?;
    // split manifests sit next to the images, so relative refs still resolve
    write_splits(&data.manifest, &sec.split, out)
}
