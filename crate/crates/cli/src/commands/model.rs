use std::path::Path;

use candle_core::Device;
use nutrifuse_core::data::{image_to_tensor, FsImageSource};
use nutrifuse_core::eval::{
    evaluate_protocol1, evaluate_protocol2, evaluate_single_image, render_report, EvalReport, Protocol,
};
use nutrifuse_core::ingredients::normalize_ingredient;
use nutrifuse_core::model::{read_header, NutritionModel};
use nutrifuse_core::training::{self, ModelPredictor, TrainData};
use nutrifuse_core::Error;

use super::{manifest, section, vocabulary, write_text, Encoder};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Loads a checkpoint and refuses it when it was trained with another
/// encoder.
pub(crate) fn load_model(path: &Path, encoder: &Encoder) -> CliResult<NutritionModel> {
    let header = read_header(path)?;
    Ok(NutritionModel::load_checked(path, &header.fusion, &encoder.get().id(), &Device::Cpu)?)
}

pub fn train(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.train, "train")?;
    let vocab = vocabulary(cfg)?;
    let encoder = Encoder::open(&cfg.encoder)?;
    let train = manifest(&sec.train_manifest)?;
    let val = manifest(&sec.val_manifest)?;
    let data = TrainData {
        train: &train,
        val: &val,
        images: &FsImageSource,
        encoder: encoder.get(),
        vocab: &vocab,
    };
    let outcome = training::train(&sec.config, &sec.fusion, &data, out)?;
    encoder.persist()?;
    println!(
        "best epoch {} (val score {:.4}), checkpoint {}",
        outcome.best_epoch,
        outcome.best_score,
        outcome.checkpoint.display()
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.eval, "eval")?;
    let encoder = Encoder::open(&cfg.encoder)?;
    let model = load_model(&sec.checkpoint, &encoder)?;
    let test = manifest(&sec.manifest)?;
    let mut predictor = ModelPredictor::new(&model, &FsImageSource, encoder.get()).with_mode(sec.ingredients);
    predictor.batch_size = sec.batch_size.max(1);
    let report = match sec.protocol {
        Protocol::SingleImage => evaluate_single_image(&predictor, &test)?,
        Protocol::Protocol1 => evaluate_protocol1(&predictor, &test, sec.stride as usize)?,
        Protocol::Protocol2 => evaluate_protocol2(&predictor, &test)?,
    };
    encoder.persist()?;
    emit_report(&report, out, "report")
}

pub(crate) fn emit_report(report: &EvalReport, out: &Path, stem: &str) -> CliResult<()> {
    report.write(out, stem)?;
    print!("{}", render_report(report));
    Ok(())
}

pub fn predict(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let sec = section(&cfg.predict, "predict")?;
    let vocab = vocabulary(cfg)?;
    let encoder = Encoder::open(&cfg.encoder)?;
    let model = load_model(&sec.checkpoint, &encoder)?;
    let image = image::open(&sec.image).map_err(|e| CliError::Data(format!("{}: {e}", sec.image.display())))?;
    let mut ingredients = Vec::new();
    for raw in &sec.ingredients {
        match normalize_ingredient(raw, &vocab) {
            Ok(c) if !ingredients.contains(&c) => ingredients.push(c),
            Ok(_) | Err(Error::RejectedTerm(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let x = image_to_tensor(&image, model.fusion_config().input_resolution, false, model.device())?
        .to_dtype(model.dtype())
        .map_err(Error::from)?;
    let p = model.predict(&x, &ingredients, encoder.get())?.clamped();
    encoder.persist()?;
    let json = serde_json::json!({
        "image": sec.image,
        "ingredients": ingredients,
        "prediction": p,
    });
    let text = serde_json::to_string_pretty(&json).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&out.join("prediction.json"), &text)?;
    println!("{text}");
    Ok(())
}
