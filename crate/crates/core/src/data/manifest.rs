use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::nutrition::{Field, NutritionVector};
use crate::error::{Error, Result};

/// Where an image came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Official,
    TextSearch,
    ImageSearch,
    VideoFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    /// Image path relative to the manifest directory.
    #[serde(rename = "image")]
    pub image_ref: String,
    pub category: String,
    pub ingredients: Vec<String>,
    #[serde(flatten)]
    pub nutrition: NutritionVector,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<u64>,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidSample {
            sample_id: self.sample_id.clone(),
            reason: reason.to_string(),
        };
        if self.sample_id.trim().is_empty() {
            return Err(invalid("empty sample_id"));
        }
        self.nutrition.validate(&self.sample_id)?;
        let is_frame = self.source == Source::VideoFrame;
        if is_frame != self.video_id.is_some() {
            return Err(invalid("video_id must be present exactly when source = video_frame"));
        }
        if self.video_id.is_some() != self.frame_index.is_some() {
            return Err(invalid("frame_index must be present exactly when video_id is"));
        }
        Ok(())
    }
}

/// A validated, immutable collection of samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub field_means: Option<NutritionVector>,
    /// Directory image paths are resolved against.
    pub root: Option<PathBuf>,
}

impl DatasetManifest {
    /// Validates samples, checks id uniqueness and fills in field means.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        Self::with_means(samples, None)
    }

    fn with_means(samples: Vec<Sample>, stored: Option<NutritionVector>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            s.validate()?;
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateId(s.sample_id.clone()));
            }
        }
        let computed = NutritionVector::mean(samples.iter().map(|s| &s.nutrition));
        if let (Some(stored), Some(computed)) = (stored, computed) {
            for field in Field::ALL {
                let (a, b) = (stored.get(field), computed.get(field));
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
                    return Err(Error::FieldMeansMismatch {
                        field: field.name(),
                        stored: a,
                        computed: b,
                    });
                }
            }
        }
        Ok(Self {
            samples,
            field_means: computed,
            root: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = Some(root.into());
        self
    }

    pub fn image_path(&self, sample: &Sample) -> PathBuf {
        match &self.root {
            Some(root) => root.join(&sample.image_ref),
            None => PathBuf::from(&sample.image_ref),
        }
    }

    /// Parses newline-delimited JSON records. An optional first line of the
    /// form `{"field_means": {...}}` carries precomputed means.
    pub fn parse(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        let mut stored = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
            let Value::Object(obj) = value else {
                return Err(Error::MalformedRecord {
                    line: line_no,
                    message: "expected a JSON object".into(),
                });
            };
            if samples.is_empty() && stored.is_none() && obj.contains_key("field_means") {
                let means = obj.get("field_means").cloned().unwrap_or(Value::Null);
                stored = Some(serde_json::from_value(means).map_err(|e| {
                    Error::MalformedRecord {
                        line: line_no,
                        message: format!("field_means: {e}"),
                    }
                })?);
                continue;
            }
            samples.push(sample_from_record(&obj, line_no)?);
        }
        Self::with_means(samples, stored)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(means) = &self.field_means {
            let header = serde_json::json!({ "field_means": means });
            out.push_str(&header.to_string());
            out.push('\n');
        }
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    /// Subset of samples, revalidated with freshly computed means.
    pub fn select(&self, keep: impl Fn(&Sample) -> bool) -> Result<Self> {
        let samples = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        let mut m = Self::new(samples)?;
        m.root = self.root.clone();
        Ok(m)
    }
}

fn sample_from_record(obj: &Map<String, Value>, line: usize) -> Result<Sample> {
    fn field<'a>(obj: &'a Map<String, Value>, line: usize, name: &'static str) -> Result<&'a Value> {
        match obj.get(name) {
            None | Some(Value::Null) => Err(Error::MissingField { line, field: name }),
            Some(v) => Ok(v),
        }
    }
    let malformed = |name: &str, what: &str| Error::MalformedRecord {
        line,
        message: format!("`{name}` must be {what}"),
    };
    let string = |name: &'static str| -> Result<String> {
        field(obj, line, name)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| malformed(name, "a string"))
    };
    let number = |name: &'static str| -> Result<f64> {
        field(obj, line, name)?
            .as_f64()
            .ok_or_else(|| malformed(name, "a number"))
    };

    let ingredients = field(obj, line, "ingredients")?
        .as_array()
        .ok_or_else(|| malformed("ingredients", "an array of strings"))?
        .iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| malformed("ingredients", "an array of strings"))?;
    let source: Source = serde_json::from_value(field(obj, line, "source")?.clone())
        .map_err(|_| malformed("source", "one of official, text_search, image_search, video_frame"))?;
    let video_id = match obj.get("video_id") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_str().ok_or_else(|| malformed("video_id", "a string"))?.to_string()),
    };
    let frame_index = match obj.get("frame_index") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| malformed("frame_index", "a non-negative integer"))?),
    };

    Ok(Sample {
        sample_id: string("sample_id")?,
        image_ref: string("image")?,
        category: string("category")?,
        ingredients,
        nutrition: NutritionVector::new(
            number("calories")?,
            number("fat")?,
            number("carbohydrates")?,
            number("protein")?,
        ),
        source,
        video_id,
        frame_index,
    })
}

/// Reads and validates a manifest; image paths resolve against its directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok(DatasetManifest::parse(&text)?.with_root(root))
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(manifest.to_jsonl().as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, cal: f64, fat: f64) -> String {
        format!(
            r#"{{"sample_id":"{id}","image":"img/{id}.jpg","category":"burger","ingredients":["bun","beef patty"],"calories":{cal},"fat":{fat},"carbohydrates":30,"protein":8,"source":"official"}}"#
        )
    }

    #[test]
    fn single_record_means() {
        let m = DatasetManifest::parse(&record("a", 250.0, 10.0)).unwrap();
        assert_eq!(m.field_means, Some(NutritionVector::new(250.0, 10.0, 30.0, 8.0)));
    }

    #[test]
    fn two_record_mean() {
        let text = format!("{}\n{}\n", record("a", 100.0, 1.0), record("b", 300.0, 1.0));
        let m = DatasetManifest::parse(&text).unwrap();
        assert_eq!(m.field_means.unwrap().calories, 200.0);
    }

    #[test]
    fn negative_fat_is_unit_error() {
        let err = DatasetManifest::parse(&record("a", 100.0, -1.0)).unwrap_err();
        assert!(matches!(err, Error::Unit { field: "fat", .. }), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{}\n{}\n", record("a", 100.0, 1.0), record("a", 300.0, 1.0));
        assert!(matches!(DatasetManifest::parse(&text), Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn missing_field_names_the_key() {
        let text = r#"{"sample_id":"a","image":"x.jpg","category":"c","ingredients":[],"calories":1,"fat":1,"carbohydrates":1,"source":"official"}"#;
        let err = DatasetManifest::parse(text).unwrap_err();
        assert!(matches!(err, Error::MissingField { line: 1, field: "protein" }), "{err}");
    }

    #[test]
    fn video_fields_must_pair_with_source() {
        let text = r#"{"sample_id":"a","image":"x.jpg","category":"c","ingredients":[],"calories":1,"fat":1,"carbohydrates":1,"protein":1,"source":"video_frame"}"#;
        assert!(matches!(DatasetManifest::parse(text), Err(Error::InvalidSample { .. })));
        let text = r#"{"sample_id":"a","image":"x.jpg","category":"c","ingredients":[],"calories":1,"fat":1,"carbohydrates":1,"protein":1,"source":"official","video_id":"v"}"#;
        assert!(matches!(DatasetManifest::parse(text), Err(Error::InvalidSample { .. })));
    }

    #[test]
    fn stored_means_are_checked() {
        let text = format!(
            "{{\"field_means\":{{\"calories\":999,\"fat\":10,\"carbohydrates\":30,\"protein\":8}}}}\n{}",
            record("a", 250.0, 10.0)
        );
        assert!(matches!(
            DatasetManifest::parse(&text),
            Err(Error::FieldMeansMismatch { field: "calories", .. })
        ));
    }

    #[test]
    fn load_resolves_images_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, record("a", 1.0, 1.0)).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.image_path(&m.samples[0]), dir.path().join("img/a.jpg"));
    }
}
