use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NutritionPrediction;
use crate::error::{Error, Result};

/// Everything the augmented pipeline saw for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub sample_id: String,
    pub replies: Vec<String>,
    pub parsed: Vec<Vec<String>>,
    pub counts: BTreeMap<String, usize>,
    pub voted: Vec<String>,
    pub fallback: bool,
    pub prediction: NutritionPrediction,
}

/// Newline-delimited JSON, one record per line.
pub fn write_audit_log(path: impl AsRef<Path>, records: &[AuditRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_audit_log(path: impl AsRef<Path>) -> Result<Vec<AuditRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let r = AuditRecord {
            sample_id: "s1".into(),
            replies: vec!["bun, fork".into()],
            parsed: vec![vec!["bun".into()]],
            counts: BTreeMap::from([("bun".into(), 1)]),
            voted: vec!["bun".into()],
            fallback: true,
            prediction: NutritionPrediction::from_array([1.5, 2.0, 3.0, 0.1]),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("audit.jsonl");
        write_audit_log(&p, &[r.clone(), r.clone()]).unwrap();
        assert_eq!(read_audit_log(&p).unwrap(), vec![r.clone(), r]);
    }
}
