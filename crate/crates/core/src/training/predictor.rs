use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::{image_to_tensor, DatasetManifest, ImageSource, NutritionPrediction, Sample};
use crate::embedding::{aggregate_with, EmbeddingVector, TextEncoder};
use crate::error::{Error, Result};
use crate::eval::NutritionPredictor;
use crate::model::{Mode, NutritionModel};

/// Which ingredient list accompanies each image at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngredientMode {
    /// The sample's own list from the manifest.
    Manifest,
    /// No ingredients; fusion is bypassed.
    Ignore,
}

/// Adapts a model, an image source and an encoder to the evaluation
/// protocols.
pub struct ModelPredictor<'a> {
    pub model: &'a NutritionModel,
    pub images: &'a dyn ImageSource,
    pub encoder: &'a dyn TextEncoder,
    pub mode: IngredientMode,
    pub batch_size: usize,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a NutritionModel, images: &'a dyn ImageSource, encoder: &'a dyn TextEncoder) -> Self {
        Self {
            model,
            images,
            encoder,
            mode: IngredientMode::Manifest,
            batch_size: 32,
        }
    }

    pub fn with_mode(mut self, mode: IngredientMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Aggregated embedding for one list, `None` when the list is empty.
pub(crate) fn embed_list(
    list: &[String],
    encoder: &dyn TextEncoder,
    l2_normalize: bool,
) -> Result<Option<EmbeddingVector>> {
    if list.is_empty() {
        Ok(None)
    } else {
        aggregate_with(list, encoder, l2_normalize).map(Some)
    }
}

pub(crate) fn load_batch(
    model: &NutritionModel,
    images: &dyn ImageSource,
    manifest: &DatasetManifest,
    samples: &[&Sample],
    flips: Option<&[bool]>,
) -> Result<Tensor> {
    let px = model.fusion_config().input_resolution;
    let tensors = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let img = images.load(manifest, s)?;
            let flip = flips.map(|f| f[i]).unwrap_or(false);
            image_to_tensor(&img, px, flip, model.device())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::stack(&tensors, 0)?.to_dtype(model.dtype())?)
}

impl NutritionPredictor for ModelPredictor<'_> {
    fn predict(&self, manifest: &DatasetManifest, samples: &[&Sample]) -> Result<Vec<NutritionPrediction>> {
        if self.mode == IngredientMode::Manifest && self.encoder.id() != self.model.spec().encoder_id {
            return Err(Error::ConfigMismatch(format!(
                "model expects encoder `{}`, got `{}`",
                self.model.spec().encoder_id,
                self.encoder.id()
            )));
        }
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.batch_size.max(1)) {
            let x = load_batch(self.model, self.images, manifest, chunk, None)?;
            let emb = chunk
                .iter()
                .map(|s| match self.mode {
                    IngredientMode::Manifest => embed_list(&s.ingredients, self.encoder, self.model.spec().l2_normalize),
                    IngredientMode::Ignore => Ok(None),
                })
                .collect::<Result<Vec<_>>>()?;
            out.extend(self.model.forward(&x, &emb, Mode::Eval)?.to_predictions()?);
        }
        Ok(out)
    }
}
