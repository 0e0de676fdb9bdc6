use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{mae_per_field, relative_percent};
use crate::data::{Field, NutritionPrediction, NutritionVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    SingleImage,
    Protocol1,
    Protocol2,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::SingleImage => "single_image",
            Protocol::Protocol1 => "protocol1",
            Protocol::Protocol2 => "protocol2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldScore {
    pub mae: f64,
    pub relative_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub n_samples: usize,
    pub per_field: BTreeMap<Field, FieldScore>,
    /// Means the relative percentages are taken against.
    pub field_means: NutritionVector,
    /// Mean relative error of the evaluated frames (video protocols only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_objective: Option<f64>,
}

impl EvalReport {
    /// Clamps negative predictions to zero, then scores them.
    pub fn from_predictions(
        protocol: Protocol,
        preds: &[NutritionPrediction],
        targets: &[NutritionVector],
        field_means: NutritionVector,
    ) -> Result<Self> {
        let clamped: Vec<_> = preds.iter().map(|p| p.clamped()).collect();
        let mae = mae_per_field(&clamped, targets)?;
        let mut per_field = BTreeMap::new();
        for f in Field::ALL {
            let mean = field_means.get(f);
            if !(mean > 0.0) {
                return Err(Error::ZeroMean(f.name()));
            }
            per_field.insert(
                f,
                FieldScore {
                    mae: mae[f.index()],
                    relative_percent: relative_percent(mae[f.index()], mean)?,
                },
            );
        }
        Ok(Self {
            protocol,
            n_samples: preds.len(),
            per_field,
            field_means,
            selection_objective: None,
        })
    }

    pub fn get(&self, field: Field) -> FieldScore {
        self.per_field[&field]
    }

    pub fn mean_mae(&self) -> f64 {
        self.per_field.values().map(|s| s.mae).sum::<f64>() / self.per_field.len() as f64
    }

    pub fn mean_relative_percent(&self) -> f64 {
        self.per_field.values().map(|s| s.relative_percent).sum::<f64>() / self.per_field.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `<stem>.txt` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let txt = dir.join(format!("{stem}.txt"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&txt, render_report(self)).map_err(|e| Error::io(&txt, e))?;
        fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        Ok((txt, json))
    }
}

/// One table cell, e.g. `61.26 / 15.49%`.
pub fn format_cell(score: FieldScore) -> String {
    format!("{:.2} / {:.2}%", score.mae, score.relative_percent)
}

pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "protocol: {}  samples: {}", report.protocol.name(), report.n_samples);
    let _ = writeln!(out, "{:<10} {:>20}", "field", "MAE / percent");
    for f in Field::ALL {
        let _ = writeln!(out, "{:<10} {:>20}", f.label(), format_cell(report.get(f)));
    }
    let avg = FieldScore {
        mae: report.mean_mae(),
        relative_percent: report.mean_relative_percent(),
    };
    let _ = writeln!(out, "{:<10} {:>20}", "Average", format_cell(avg));
    if let Some(obj) = report.selection_objective {
        let _ = writeln!(out, "selection objective: {obj:.6}");
    }
    out
}
