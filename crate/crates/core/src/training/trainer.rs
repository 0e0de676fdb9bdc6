use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::{OptimizerConfig, RmsProp};
use super::predictor::{embed_list, load_batch, ModelPredictor};
use crate::data::{DatasetManifest, ImageSource, Sample};
use crate::embedding::TextEncoder;
use crate::error::{Error, Result};
use crate::eval::{evaluate_single_image, EvalReport};
use crate::ingredients::{apply_robustness, IngredientVocabulary, RobustnessConfig};
use crate::model::{loss_tensor, FusionConfig, ModelSpec, Mode, NutritionModel, AUX_LOSS_WEIGHT};
use crate::util::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Backbone weights from `pretrained_weights`.
    Pretrained,
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub init: InitMode,
    /// Safetensors file with torchvision parameter names.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained_weights: Option<PathBuf>,
    pub robustness: RobustnessConfig,
    pub seed: u64,
    /// Stops after this many optimisation steps (the current epoch is still
    /// validated).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub random_hflip: bool,
    pub aux_loss_weight: f64,
    pub precision: Precision,
    pub l2_normalize_embeddings: bool,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            epochs: 100,
            batch_size: 64,
            init: InitMode::Random,
            pretrained_weights: None,
            robustness: RobustnessConfig::default(),
            seed: 0,
            max_steps: None,
            random_hflip: true,
            aux_loss_weight: AUX_LOSS_WEIGHT,
            precision: Precision::F32,
            l2_normalize_embeddings: false,
            eval_batch_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.robustness.validate()?;
        if self.batch_size < 1 || self.epochs < 1 || self.eval_batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size, epochs and eval_batch_size must be at least 1".into()));
        }
        if self.init == InitMode::Pretrained && self.pretrained_weights.is_none() {
            return Err(Error::InvalidConfig("init = pretrained needs pretrained_weights".into()));
        }
        if !(self.aux_loss_weight >= 0.0) {
            return Err(Error::InvalidConfig("aux_loss_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Inputs shared by training and validation.
pub struct TrainData<'a> {
    pub train: &'a DatasetManifest,
    pub val: &'a DatasetManifest,
    pub images: &'a dyn ImageSource,
    pub encoder: &'a dyn TextEncoder,
    pub vocab: &'a IngredientVocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub mean_train_loss: f64,
    /// Mean over fields of the validation relative-error percentage.
    pub val_score: f64,
    pub val_report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub best_score: f64,
    pub epochs: Vec<EpochRecord>,
    /// Eq. 6 loss of the main heads at every step, before the update.
    pub step_losses: Vec<f64>,
}

fn build_model(cfg: &TrainConfig, fusion: &FusionConfig, encoder: &dyn TextEncoder) -> Result<NutritionModel> {
    let spec = ModelSpec::new(*fusion, encoder).with_l2_normalize(cfg.l2_normalize_embeddings);
    let dev = Device::Cpu;
    let dtype = cfg.precision.dtype();
    match (&cfg.init, &cfg.pretrained_weights) {
        (InitMode::Pretrained, Some(w)) => NutritionModel::with_backbone_weights(spec, w, cfg.seed, dtype, &dev),
        _ => NutritionModel::new(spec, cfg.seed, dtype, &dev),
    }
}

fn targets_tensor(samples: &[&Sample], model: &NutritionModel) -> Result<Tensor> {
    let v: Vec<f64> = samples.iter().flat_map(|s| s.nutrition.to_array()).collect();
    Ok(Tensor::from_vec(v, (samples.len(), 4), model.device())?.to_dtype(model.dtype())?)
}

/// Trains a freshly initialised model and writes the checkpoint with the
/// best validation score to `out_dir/best.safetensors`.
pub fn train(config: &TrainConfig, fusion: &FusionConfig, data: &TrainData, out_dir: impl AsRef<Path>) -> Result<TrainOutcome> {
    config.validate()?;
    fusion.validate()?;
    let model = build_model(config, fusion, data.encoder)?;
    train_model(&model, config, data, out_dir)
}

/// Training loop over an existing model (its variables are updated in
/// place).
pub fn train_model(
    model: &NutritionModel,
    config: &TrainConfig,
    data: &TrainData,
    out_dir: impl AsRef<Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.encoder.id() != model.spec().encoder_id {
        return Err(Error::ConfigMismatch(format!(
            "model expects encoder `{}`, got `{}`",
            model.spec().encoder_id,
            data.encoder.id()
        )));
    }
    if config.l2_normalize_embeddings != model.spec().l2_normalize {
        return Err(Error::ConfigMismatch(
            "l2_normalize_embeddings differs from the model's embedding setting".into(),
        ));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let best_path = out_dir.join("best.safetensors");
    let fingerprint = data.encoder.fingerprint();

    let mut opt = RmsProp::new(model.trainable_vars(), config.optimizer)?;
    let mut aug_rng = seeded_rng(config.seed, &[b"augment", &config.robustness.seed.to_le_bytes()]);
    let mut step = 0usize;
    let mut step_losses = Vec::new();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64)> = None;

    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut seeded_rng(config.seed, &[b"shuffle", &(epoch as u64).to_le_bytes()]));
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0;
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &data.train.samples[i]).collect();
            let flips: Vec<bool> = samples
                .iter()
                .map(|_| config.random_hflip && aug_rng.random_bool(0.5))
                .collect();
            let x = load_batch(model, data.images, data.train, &samples, Some(&flips))?;
            let emb = samples
                .iter()
                .map(|s| {
                    let list = apply_robustness(&s.ingredients, data.vocab, &config.robustness, &mut aug_rng);
                    embed_list(&list, data.encoder, model.spec().l2_normalize)
                })
                .collect::<Result<Vec<_>>>()?;
            let y = targets_tensor(&samples, model)?;
            let out = model.forward(&x, &emb, Mode::Train)?;
            let (main, _) = loss_tensor(&out.predictions, &y)?;
            let total = match &out.aux {
                Some(aux) if config.aux_loss_weight > 0.0 => (&main + (loss_tensor(aux, &y)?.0 * config.aux_loss_weight)?)?,
                _ => main.clone(),
            };
            let value = main.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            let total_value = total.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() || !total_value.is_finite() {
                return Err(Error::Divergence { step, loss: total_value });
            }
            step_losses.push(value);
            epoch_loss += value;
            epoch_steps += 1;
            opt.step(&total.backward()?)?;
            step += 1;
        }
        if epoch_steps == 0 {
            break 'epochs;
        }
        let report = validate_model(model, data.val, data.images, data.encoder, config.eval_batch_size)?;
        let score = report.mean_relative_percent();
        log::info!("epoch {epoch}: train loss {:.4}, val score {score:.4}", epoch_loss / epoch_steps as f64);
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((epoch, score));
            model.save(&best_path)?;
        }
        epochs.push(EpochRecord {
            epoch,
            steps: epoch_steps,
            mean_train_loss: epoch_loss / epoch_steps as f64,
            val_score: score,
            val_report: report,
        });
        if config.max_steps.is_some_and(|m| step >= m) {
            break;
        }
    }

    if data.encoder.fingerprint() != fingerprint {
        return Err(Error::EncoderUnavailable("text encoder parameters changed during training".into()));
    }
    let (best_epoch, best_score) = best.ok_or(Error::EmptyDataset)?;
    let outcome = TrainOutcome {
        checkpoint: best_path,
        best_epoch,
        best_score,
        epochs,
        step_losses,
    };
    let history = out_dir.join("history.json");
    fs::write(&history, serde_json::to_string_pretty(&outcome)?).map_err(|e| Error::io(&history, e))?;
    Ok(outcome)
}

/// Scores a model on `val` with the manifest ingredient lists.
pub fn validate_model(
    model: &NutritionModel,
    val: &DatasetManifest,
    images: &dyn ImageSource,
    encoder: &dyn TextEncoder,
    batch_size: usize,
) -> Result<EvalReport> {
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut predictor = ModelPredictor::new(model, images, encoder);
    predictor.batch_size = batch_size;
    evaluate_single_image(&predictor, val)
}

/// Loads `checkpoint`, refusing one written for another configuration or
/// encoder, and scores it on `val`.
pub fn validate(
    checkpoint: impl AsRef<Path>,
    fusion: &FusionConfig,
    val: &DatasetManifest,
    images: &dyn ImageSource,
    encoder: &dyn TextEncoder,
) -> Result<EvalReport> {
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let model = NutritionModel::load_checked(checkpoint, fusion, &encoder.id(), &Device::Cpu)?;
    validate_model(&model, val, images, encoder, 32)
}
