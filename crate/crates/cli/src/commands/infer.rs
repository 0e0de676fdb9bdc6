use std::fs;
use std::path::Path;

use nutrifuse_core::data::{FsImageSource, ImageSource};
use nutrifuse_core::eval::{EvalReport, Protocol};
use nutrifuse_core::inference::{
    write_audit_log, AugmentedInference, HttpClient, MultimodalClient, NoisyClient, OracleClient,
};
use nutrifuse_core::ingredients::{build_dialogue_prompt, DEFAULT_DIALOGUE_TEMPLATE};
use nutrifuse_core::{Error, NutritionVector, Sample};
use serde::Serialize;

use super::model::{emit_report, load_model};
use super::{manifest, section, vocabulary, write_text, Encoder};
use crate::config::{ClientSection, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Serialize)]
struct PredictionLine<'a> {
    sample_id: &'a str,
    ingredients: Vec<String>,
    #[serde(flatten)]
    prediction: nutrifuse_core::NutritionPrediction,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn vote_infer(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.vote_infer, "vote_infer")?;
    sec.augmentation.validate()?;
    sec.vote.validate()?;
    let vocab = vocabulary(cfg)?;
    let encoder = Encoder::open(&cfg.encoder)?;
    let model = load_model(&sec.checkpoint, &encoder)?;
    let test = manifest(&sec.manifest)?;
    if test.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let prompt = match &sec.prompt {
        Some(p) => read_text(p)?,
        None => nutrifuse_core::ingredients::DEFAULT_INGREDIENT_PROMPT.to_string(),
    };
    let shared_http = match &sec.client {
        ClientSection::Http(c) => Some(HttpClient::new(c.clone())),
        _ => None,
    };
    // oracle and noisy clients answer from the sample's own list
    let client_for = |s: &Sample| -> Box<dyn MultimodalClient + '_> {
        match (&sec.client, &shared_http) {
            (ClientSection::Oracle, _) => Box::new(OracleClient::new(s.ingredients.clone())),
            (ClientSection::Noisy { noise }, _) => {
                Box::new(NoisyClient::new(s.ingredients.clone(), &vocab, noise.clone()))
            }
            (ClientSection::Http(_), Some(h)) => Box::new(h),
            (ClientSection::Http(_), None) => unreachable!("http client built above"),
        }
    };

    let mut audit = Vec::with_capacity(test.len());
    let mut lines = String::new();
    let mut preds = Vec::with_capacity(test.len());
    for s in &test.samples {
        let image = FsImageSource.load(&test, s)?;
        let client = client_for(s);
        let mut inference = AugmentedInference::new(&model, encoder.get(), client.as_ref(), &vocab)
            .with_augmentation(sec.augmentation.clone())
            .with_vote(sec.vote);
        inference.prompt = prompt.clone();
        inference.strict = sec.strict;
        let r = inference.predict(&image)?;
        let line = PredictionLine {
            sample_id: &s.sample_id,
            ingredients: r.voted.iter().cloned().collect(),
            prediction: r.prediction,
        };
        lines.push_str(&serde_json::to_string(&line).map_err(|e| CliError::Runtime(e.to_string()))?);
        lines.push('\n');
        log::info!("{}: voted {:?}", s.sample_id, line.ingredients);
        audit.push(r.audit(&s.sample_id));
        preds.push(r.prediction);
    }
    encoder.persist()?;
    write_audit_log(out.join("audit.jsonl"), &audit)?;
    write_text(&out.join("predictions.jsonl"), &lines)?;
    let targets: Vec<_> = test.samples.iter().map(|s| s.nutrition).collect();
    let means = test.field_means.ok_or(Error::EmptyDataset)?;
    let report = EvalReport::from_predictions(Protocol::SingleImage, &preds, &targets, means)?;
    emit_report(&report, out, "report")
}

pub fn dialogue_template(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.dialogue_template, "dialogue_template")?;
    let template = match &sec.template {
        Some(p) => read_text(p)?,
        None => DEFAULT_DIALOGUE_TEMPLATE.to_string(),
    };
    let n = NutritionVector::new(sec.calories, sec.fat, sec.carbohydrates, sec.protein);
    n.validate("dialogue_template")?;
    let prompt = build_dialogue_prompt(&n, sec.turns, &template)?;
    write_text(&out.join("dialogue_prompt.txt"), &prompt)?;
    print!("{prompt}");
    if !prompt.ends_with('\n') {
        println!();
    }
    Ok(())
}
