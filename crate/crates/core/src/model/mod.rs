//! Backbones instrumented with an ingredient fusion hook, the multi-task
//! regression heads, the loss and checkpoint I/O.

mod checkpoint;
mod config;
mod fusion;
mod heads;
mod inception;
mod layers;
mod loss;
mod params;
mod resnet;
mod vit;

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};

pub use checkpoint::{read_header, CheckpointHeader, CHECKPOINT_VERSION};
pub use config::{Backbone, BackboneScale, FusionConfig, InjectionSite};
pub use fusion::{fuse_broadcast, fuse_token, FeatureMap, TokenSequence};
pub use heads::{head_forward, HeadParams, MultiTaskHeads, HEAD_HIDDEN_WIDTH};
pub use loss::{compute_loss, loss_tensor, LossBreakdown, AUX_LOSS_WEIGHT};
pub use params::{Init, ParamBuilder, ParamStore};

use crate::data::NutritionPrediction;
use crate::embedding::{aggregate_with, EmbeddingVector, ProjectorParams, TextEncoder};
use crate::error::{Error, Result};
use inception::InceptionV3;
use resnet::ResNet;
use vit::VisionTransformer;

const PROJECTOR: &str = "ingredient_projector";
const HEADS: &str = "nutrition_heads";
const AUX_HEADS: &str = "aux_nutrition_heads";

/// Projected ingredient features `(B, C)` and which rows carry them.
pub(crate) struct Injection<'a> {
    pub projected: &'a Tensor,
    pub present: &'a [bool],
}

/// Everything needed to rebuild a model's architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub fusion: FusionConfig,
    pub embedding_dim: usize,
    pub encoder_id: String,
    /// L2-normalise each ingredient embedding before averaging.
    pub l2_normalize: bool,
}

impl ModelSpec {
    pub fn new(fusion: FusionConfig, encoder: &dyn TextEncoder) -> Self {
        Self {
            fusion,
            embedding_dim: encoder.dim(),
            encoder_id: encoder.id(),
            l2_normalize: false,
        }
    }

    pub fn with_l2_normalize(mut self, on: bool) -> Self {
        self.l2_normalize = on;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Also evaluates auxiliary heads where the backbone has them.
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// `(B, 4)` in field order.
    pub predictions: Tensor,
    /// `(B, 4)` from the auxiliary heads, training mode only.
    pub aux: Option<Tensor>,
}

impl ModelOutput {
    pub fn to_predictions(&self) -> Result<Vec<NutritionPrediction>> {
        rows_to_predictions(&self.predictions)
    }
}

pub(crate) fn rows_to_predictions(t: &Tensor) -> Result<Vec<NutritionPrediction>> {
    let rows = t.to_dtype(DType::F64)?.to_vec2::<f64>()?;
    Ok(rows
        .into_iter()
        .map(|r| NutritionPrediction::from_array([r[0], r[1], r[2], r[3]]))
        .collect())
}

#[derive(Debug, Clone)]
enum Trunk {
    ResNet(ResNet),
    Inception(InceptionV3),
    Vit(VisionTransformer),
}

/// Backbone, ingredient projector and regression heads with their
/// parameters.
#[derive(Debug)]
pub struct NutritionModel {
    spec: ModelSpec,
    trunk: Trunk,
    projector: ProjectorParams,
    heads: MultiTaskHeads,
    aux_heads: Option<MultiTaskHeads>,
    store: ParamStore,
    dtype: DType,
    device: Device,
}

impl NutritionModel {
    /// Randomly initialised model; all draws derive from `seed`.
    pub fn new(spec: ModelSpec, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        Self::build(spec, ParamBuilder::new(seed, dtype, device))
    }

    /// Backbone weights from a safetensors file using torchvision names;
    /// projector, heads and anything absent from the file are drawn from
    /// `seed`.
    pub fn with_backbone_weights(
        spec: ModelSpec,
        weights: impl AsRef<Path>,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let source = checkpoint::read_plain(weights.as_ref(), device)?;
        let source: HashMap<_, _> = source
            .into_iter()
            .filter(|(k, _)| !k.starts_with(PROJECTOR) && !k.starts_with(HEADS) && !k.starts_with(AUX_HEADS))
            .collect();
        Self::build(spec, ParamBuilder::new(seed, dtype, device).with_source(source, false))
    }

    fn build(spec: ModelSpec, pb: ParamBuilder) -> Result<Self> {
        let cfg = spec.fusion;
        cfg.validate()?;
        if spec.embedding_dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        let trunk = match cfg.backbone {
            Backbone::Resnet50 => Trunk::ResNet(ResNet::new(&pb, [3, 4, 6, 3], cfg.scale, cfg.injection_site)?),
            Backbone::Resnet101 => Trunk::ResNet(ResNet::new(&pb, [3, 4, 23, 3], cfg.scale, cfg.injection_site)?),
            Backbone::InceptionV3 => Trunk::Inception(InceptionV3::new(&pb, cfg.scale, cfg.injection_site)?),
            Backbone::VitBase16 => Trunk::Vit(VisionTransformer::new(&pb, cfg.scale, cfg.input_resolution)?),
        };
        let pp = pb.pp(PROJECTOR);
        let (c, e) = (cfg.fusion_dim(), spec.embedding_dim);
        let projector = ProjectorParams::new(
            pp.var("weight", &[c, e], Init::LinearDefault)?,
            pp.var("bias", &[c], Init::Uniform { bound: 1.0 / (e as f64).sqrt() })?,
        )?;
        let heads = MultiTaskHeads::new(&pb.pp(HEADS), cfg.feature_dim())?;
        let aux_heads = if cfg.has_aux_heads() {
            Some(MultiTaskHeads::new(&pb.pp(AUX_HEADS), cfg.scale.width(768))?)
        } else {
            None
        };
        let (dtype, device) = (pb.dtype(), pb.device().clone());
        Ok(Self {
            spec,
            trunk,
            projector,
            heads,
            aux_heads,
            store: pb.finish()?,
            dtype,
            device,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn fusion_config(&self) -> &FusionConfig {
        &self.spec.fusion
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.store.trainable()
    }

    pub fn projector(&self) -> &ProjectorParams {
        &self.projector
    }

    /// The projector's `(weight, bias)` variables.
    pub fn projector_vars(&self) -> (Var, Var) {
        let v = |n: &str| self.store.vars[&format!("{PROJECTOR}.{n}")].clone();
        (v("weight"), v("bias"))
    }

    pub fn heads(&self) -> &MultiTaskHeads {
        &self.heads
    }

    fn check_images(&self, images: &Tensor) -> Result<usize> {
        let px = self.spec.fusion.input_resolution;
        let dims = images.dims();
        if dims.len() != 4 || dims[1] != 3 || dims[2] != px || dims[3] != px {
            return Err(Error::Resolution {
                expected: format!("(B, 3, {px}, {px})"),
                actual: format!("{dims:?}"),
            });
        }
        Ok(dims[0])
    }

    /// Runs the model on `(B, 3, H, W)` images. `ingredients[i]` is the
    /// aggregated embedding for sample `i`, or `None` to bypass fusion for
    /// that sample.
    pub fn forward(
        &self,
        images: &Tensor,
        ingredients: &[Option<EmbeddingVector>],
        mode: Mode,
    ) -> Result<ModelOutput> {
        let b = self.check_images(images)?;
        if ingredients.len() != b {
            return Err(Error::LengthMismatch {
                left: ingredients.len(),
                right: b,
            });
        }
        let images = images.to_dtype(self.dtype)?;
        let present: Vec<bool> = ingredients.iter().map(Option::is_some).collect();
        let projected = if present.iter().any(|&p| p) {
            let e = self.spec.embedding_dim;
            let mut rows = Vec::with_capacity(b * e);
            for t in ingredients {
                match t {
                    Some(t) if t.dim() == e => rows.extend(t.values().iter().map(|&x| x as f64)),
                    Some(t) => return Err(Error::shape(format!("embedding dim {e}"), t.dim())),
                    None => rows.extend(std::iter::repeat_n(0.0, e)),
                }
            }
            let t = Tensor::from_vec(rows, (b, e), &self.device)?.to_dtype(self.dtype)?;
            Some(self.projector.forward(&t)?)
        } else {
            None
        };
        let inject = projected.as_ref().map(|p| Injection {
            projected: p,
            present: &present,
        });
        self.run(&images, inject.as_ref(), mode)
    }

    /// Forward pass of the plain backbone with no fusion hook at all.
    pub fn forward_unfused(&self, images: &Tensor, mode: Mode) -> Result<ModelOutput> {
        self.check_images(images)?;
        self.run(&images.to_dtype(self.dtype)?, None, mode)
    }

    fn run(&self, images: &Tensor, inject: Option<&Injection>, mode: Mode) -> Result<ModelOutput> {
        let (features, aux_features) = match &self.trunk {
            Trunk::ResNet(r) => (r.forward(images, inject)?, None),
            Trunk::Vit(v) => (v.forward(images, inject)?, None),
            Trunk::Inception(i) => {
                let out = i.forward(images, inject, mode == Mode::Train)?;
                (out.features, out.aux)
            }
        };
        let predictions = self.heads.forward(&features)?;
        let aux = match (aux_features, &self.aux_heads) {
            (Some(f), Some(h)) => Some(h.forward(&f)?),
            _ => None,
        };
        Ok(ModelOutput { predictions, aux })
    }

    /// Single-image prediction from canonical ingredient names. An empty
    /// list bypasses fusion.
    pub fn predict(
        &self,
        image: &Tensor,
        ingredients: &[String],
        encoder: &dyn TextEncoder,
    ) -> Result<NutritionPrediction> {
        let image = if image.rank() == 3 { image.unsqueeze(0)? } else { image.clone() };
        let emb = if ingredients.is_empty() {
            None
        } else {
            Some(self.embed(ingredients, encoder)?)
        };
        let out = self.forward(&image, &[emb], Mode::Eval)?;
        Ok(out.to_predictions()?[0])
    }

    /// Aggregated embedding, checked against the encoder this model was
    /// built for.
    pub fn embed(&self, ingredients: &[String], encoder: &dyn TextEncoder) -> Result<EmbeddingVector> {
        if encoder.id() != self.spec.encoder_id {
            return Err(Error::ConfigMismatch(format!(
                "model expects encoder `{}`, got `{}`",
                self.spec.encoder_id,
                encoder.id()
            )));
        }
        aggregate_with(ingredients, encoder, self.spec.l2_normalize)
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            version: CHECKPOINT_VERSION,
            fusion: self.spec.fusion,
            embedding_dim: self.spec.embedding_dim,
            fusion_dim: self.spec.fusion.fusion_dim(),
            encoder_id: self.spec.encoder_id.clone(),
            l2_normalize: self.spec.l2_normalize,
            dtype: checkpoint::dtype_name(self.dtype).to_string(),
        }
    }

    /// Writes every parameter and buffer plus the configuration header.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let tensors: Vec<(String, Tensor)> = self.store.named_tensors().into_iter().collect();
        checkpoint::write(path.as_ref(), &self.header(), &tensors)
    }

    /// Restores a model from a checkpoint. Every parameter must be present;
    /// a missing one is reported as [`Error::UninitializedModel`].
    pub fn load(path: impl AsRef<Path>, device: &Device) -> Result<Self> {
        let path = path.as_ref();
        let (header, tensors) = checkpoint::read(path, device)?;
        let dtype = checkpoint::parse_dtype(&header.dtype)?;
        let spec = ModelSpec {
            fusion: header.fusion,
            embedding_dim: header.embedding_dim,
            encoder_id: header.encoder_id.clone(),
            l2_normalize: header.l2_normalize,
        };
        if header.fusion_dim != spec.fusion.fusion_dim() {
            return Err(Error::ConfigMismatch(format!(
                "stored fusion width {} but config implies {}",
                header.fusion_dim,
                spec.fusion.fusion_dim()
            )));
        }
        let n_file = tensors.len();
        let model = Self::build(spec, ParamBuilder::new(0, dtype, device).with_source(tensors, true))?;
        let n_model = model.store.vars.len() + model.store.buffers.len();
        if n_file != n_model {
            return Err(Error::Checkpoint(format!(
                "{}: {n_file} tensors in file, model has {n_model}",
                path.display()
            )));
        }
        Ok(model)
    }

    /// [`NutritionModel::load`] that also refuses a checkpoint written for a
    /// different configuration or encoder.
    pub fn load_checked(
        path: impl AsRef<Path>,
        fusion: &FusionConfig,
        encoder_id: &str,
        device: &Device,
    ) -> Result<Self> {
        read_header(path.as_ref())?.check(fusion, encoder_id)?;
        Self::load(path, device)
    }
}
