use std::collections::BTreeSet;
use std::sync::Mutex;
use std::thread;

use image::DynamicImage;

use super::audit::AuditRecord;
use super::augment::{augment_image, AugmentationSpec};
use super::client::{encode_png, parse_reply, MultimodalClient, ParsedReply};
use super::vote::{majority_vote_detailed, IngredientPredictionSet, VoteConfig};
use crate::data::{image_to_tensor, DatasetManifest, ImageSource, NutritionPrediction, Sample};
use crate::embedding::TextEncoder;
use crate::error::{Error, Result};
use crate::eval::NutritionPredictor;
use crate::ingredients::{IngredientVocabulary, DEFAULT_INGREDIENT_PROMPT};
use crate::model::NutritionModel;

/// Result of one augmented prediction, with everything needed for an audit
/// record.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPrediction {
    pub prediction: NutritionPrediction,
    pub voted: BTreeSet<String>,
    pub votes: IngredientPredictionSet,
    pub replies: Vec<String>,
    pub parsed: Vec<ParsedReply>,
    pub fallback: bool,
}

impl AugmentedPrediction {
    pub fn audit(&self, sample_id: impl Into<String>) -> AuditRecord {
        AuditRecord {
            sample_id: sample_id.into(),
            replies: self.replies.clone(),
            parsed: self
                .parsed
                .iter()
                .map(|p| p.ingredients.iter().cloned().collect())
                .collect(),
            counts: self.votes.counts.clone(),
            voted: self.voted.iter().cloned().collect(),
            fallback: self.fallback,
            prediction: self.prediction,
        }
    }
}

/// Queries the client on `K` augmented views, votes, and runs the model on
/// the original image with the voted ingredients.
pub struct AugmentedInference<'a> {
    pub model: &'a NutritionModel,
    pub encoder: &'a dyn TextEncoder,
    pub client: &'a dyn MultimodalClient,
    pub vocab: &'a IngredientVocabulary,
    pub augmentation: AugmentationSpec,
    pub vote: VoteConfig,
    pub prompt: String,
    pub strict: bool,
    /// Issue the `K` queries from separate threads.
    pub concurrent: bool,
}

impl<'a> AugmentedInference<'a> {
    pub fn new(
        model: &'a NutritionModel,
        encoder: &'a dyn TextEncoder,
        client: &'a dyn MultimodalClient,
        vocab: &'a IngredientVocabulary,
    ) -> Self {
        Self {
            model,
            encoder,
            client,
            vocab,
            augmentation: AugmentationSpec::default(),
            vote: VoteConfig::default(),
            prompt: DEFAULT_INGREDIENT_PROMPT.to_string(),
            strict: false,
            concurrent: true,
        }
    }

    pub fn with_augmentation(mut self, spec: AugmentationSpec) -> Self {
        self.augmentation = spec;
        self
    }

    pub fn with_vote(mut self, vote: VoteConfig) -> Self {
        self.vote = vote;
        self
    }

    fn query_view(&self, image: &DynamicImage, k: usize) -> Result<(String, ParsedReply)> {
        let view = augment_image(image, k, &self.augmentation, self.model.fusion_config().input_resolution)?;
        let reply = self.client.complete(&encode_png(&view)?, &self.prompt)?;
        let parsed = parse_reply(&reply, self.vocab, self.strict)?;
        Ok((reply, parsed))
    }

    /// Raw replies and parsed sets for views `1..=K`, in view order.
    pub fn query(&self, image: &DynamicImage) -> Result<Vec<(String, ParsedReply)>> {
        self.augmentation.validate()?;
        let k = self.augmentation.k();
        if !self.concurrent || k == 1 {
            return (1..=k).map(|i| self.query_view(image, i)).collect();
        }
        thread::scope(|s| {
            let handles: Vec<_> = (1..=k).map(|i| s.spawn(move || self.query_view(image, i))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Client("query thread panicked".into()))))
                .collect()
        })
    }

    pub fn predict(&self, image: &DynamicImage) -> Result<AugmentedPrediction> {
        self.vote.validate()?;
        let answers = self.query(image)?;
        let (replies, parsed): (Vec<String>, Vec<ParsedReply>) = answers.into_iter().unzip();
        let votes = IngredientPredictionSet::new(parsed.iter().map(|p| p.ingredients.clone()).collect());
        let (voted, fallback) = majority_vote_detailed(&votes, &self.vote);
        if voted.is_empty() {
            log::warn!("no ingredients survived voting; predicting from the image alone");
        }
        let px = self.model.fusion_config().input_resolution;
        let x = image_to_tensor(image, px, false, self.model.device())?.to_dtype(self.model.dtype())?;
        let list: Vec<String> = voted.iter().cloned().collect();
        let prediction = self.model.predict(&x, &list, self.encoder)?;
        Ok(AugmentedPrediction {
            prediction,
            voted,
            votes,
            replies,
            parsed,
            fallback,
        })
    }
}

/// Augmented prediction for one image with default prompt and parsing.
pub fn predict_with_augmented_ingredients(
    image: &DynamicImage,
    model: &NutritionModel,
    encoder: &dyn TextEncoder,
    client: &dyn MultimodalClient,
    vocab: &IngredientVocabulary,
    spec: &AugmentationSpec,
    cfg: &VoteConfig,
) -> Result<(NutritionPrediction, BTreeSet<String>)> {
    let out = AugmentedInference::new(model, encoder, client, vocab)
        .with_augmentation(spec.clone())
        .with_vote(*cfg)
        .predict(image)?;
    Ok((out.prediction, out.voted))
}

/// Evaluation adapter that ignores manifest ingredients and predicts them
/// through the client instead. Audit records accumulate in sample order.
pub struct AugmentedPredictor<'a> {
    pub inference: AugmentedInference<'a>,
    pub images: &'a dyn ImageSource,
    audit: Mutex<Vec<AuditRecord>>,
}

impl<'a> AugmentedPredictor<'a> {
    pub fn new(inference: AugmentedInference<'a>, images: &'a dyn ImageSource) -> Self {
        Self {
            inference,
            images,
            audit: Mutex::new(Vec::new()),
        }
    }

    pub fn take_audit(&self) -> Vec<AuditRecord> {
        std::mem::take(&mut *self.audit.lock().expect("audit lock"))
    }
}

impl NutritionPredictor for AugmentedPredictor<'_> {
    fn predict(&self, manifest: &DatasetManifest, samples: &[&Sample]) -> Result<Vec<NutritionPrediction>> {
        let mut out = Vec::with_capacity(samples.len());
        for s in samples {
            let image = self.images.load(manifest, s)?;
            let r = self.inference.predict(&image)?;
            self.audit.lock().expect("audit lock").push(r.audit(&s.sample_id));
            out.push(r.prediction);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::StubEncoder;
    use crate::inference::{OracleClient, Transform};
    use crate::model::{Backbone, FusionConfig, ModelSpec};
    use candle_core::{DType, Device};
    use image::{Rgb, RgbImage};

    fn fixture() -> (NutritionModel, StubEncoder, DynamicImage) {
        let enc = StubEncoder::new(16, 2);
        let fusion = FusionConfig::tiny(Backbone::Resnet50);
        let model = NutritionModel::new(ModelSpec::new(fusion, &enc), 3, DType::F32, &Device::Cpu).unwrap();
        let img = DynamicImage::ImageRgb8(RgbImage::from_fn(48, 40, |x, y| Rgb([(x * 5) as u8, (y * 6) as u8, 90])));
        (model, enc, img)
    }

    fn list(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn oracle_client_equals_direct_forward() {
        let (model, enc, img) = fixture();
        let vocab = IngredientVocabulary::builtin();
        let truth = list(&["bun", "lettuce", "beef patty"]);
        let client = OracleClient::new(truth.clone());
        let (pred, voted) = predict_with_augmented_ingredients(
            &img,
            &model,
            &enc,
            &client,
            &vocab,
            &AugmentationSpec::default(),
            &VoteConfig::default(),
        )
        .unwrap();
        assert_eq!(voted, truth.iter().cloned().collect());
        let px = model.fusion_config().input_resolution;
        let x = image_to_tensor(&img, px, false, model.device()).unwrap();
        let direct = model.predict(&x, &truth, &enc).unwrap();
        assert_eq!(pred, direct);
    }

    struct Junk(Mutex<usize>);
    impl MultimodalClient for Junk {
        fn complete(&self, _: &[u8], _: &str) -> Result<String> {
            let terms = ["bun", "lettuce", "tomato", "onion", "pickle"];
            let mut n = self.0.lock().unwrap();
            *n += 1;
            Ok(terms[(*n - 1) % terms.len()].to_string())
        }
    }

    #[test]
    fn disjoint_replies_use_fallback() {
        let (model, enc, img) = fixture();
        let vocab = IngredientVocabulary::builtin();
        let client = Junk(Mutex::new(0));
        let out = AugmentedInference::new(&model, &enc, &client, &vocab).predict(&img).unwrap();
        assert!(out.fallback);
        assert_eq!(out.voted.len(), 5);
        assert!(out.prediction.to_array().iter().all(|v| v.is_finite()));
        let rec = out.audit("x");
        assert_eq!(rec.replies.len(), 5);
        assert!(rec.fallback);
    }

    #[test]
    fn concurrent_and_sequential_agree() {
        let (model, enc, img) = fixture();
        let vocab = IngredientVocabulary::builtin();
        let truth = list(&["bun", "cheese", "tomato", "onion"]);
        let client = crate::inference::NoisyClient::new(truth, &vocab, Default::default());
        let mut spec = AugmentationSpec::default();
        spec.transforms.push(Transform::Rotation { max_degrees: 15.0 });
        let a = AugmentedInference::new(&model, &enc, &client, &vocab)
            .with_augmentation(spec.clone())
            .predict(&img)
            .unwrap();
        let mut seq = AugmentedInference::new(&model, &enc, &client, &vocab).with_augmentation(spec);
        seq.concurrent = false;
        let b = seq.predict(&img).unwrap();
        assert_eq!(a, b);
    }
}
