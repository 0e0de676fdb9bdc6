use std::collections::BTreeMap;

use super::metrics::relative_error;
use super::report::{EvalReport, Protocol};
use crate::data::{DatasetManifest, NutritionPrediction, NutritionVector, Sample};
use crate::error::{Error, Result};

/// Anything that maps manifest samples to nutrition predictions.
pub trait NutritionPredictor {
    fn predict(&self, manifest: &DatasetManifest, samples: &[&Sample]) -> Result<Vec<NutritionPrediction>>;
}

impl<F> NutritionPredictor for F
where
    F: Fn(&Sample) -> Result<NutritionPrediction>,
{
    fn predict(&self, _: &DatasetManifest, samples: &[&Sample]) -> Result<Vec<NutritionPrediction>> {
        samples.iter().map(|s| self(s)).collect()
    }
}

/// Prediction for one video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub video_id: String,
    pub prediction: NutritionPrediction,
    pub target: NutritionVector,
}

fn means_of(manifest: &DatasetManifest) -> Result<NutritionVector> {
    manifest.field_means.ok_or(Error::EmptyDataset)
}

/// Scores every sample of the manifest as an independent image.
pub fn evaluate_single_image(predictor: &dyn NutritionPredictor, manifest: &DatasetManifest) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let samples: Vec<&Sample> = manifest.samples.iter().collect();
    let preds = predictor.predict(manifest, &samples)?;
    let targets: Vec<_> = samples.iter().map(|s| s.nutrition).collect();
    EvalReport::from_predictions(Protocol::SingleImage, &preds, &targets, means_of(manifest)?)
}

fn frame_results(
    predictor: &dyn NutritionPredictor,
    manifest: &DatasetManifest,
    stride: usize,
) -> Result<Vec<FrameResult>> {
    if stride == 0 {
        return Err(Error::BadStride(0));
    }
    let frames: Vec<&Sample> = manifest
        .samples
        .iter()
        .filter(|s| matches!((s.video_id.as_ref(), s.frame_index), (Some(_), Some(i)) if i % stride as u64 == 0))
        .collect();
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predictor.predict(manifest, &frames)?;
    if preds.len() != frames.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: frames.len(),
        });
    }
    Ok(frames
        .iter()
        .zip(preds)
        .map(|(s, p)| FrameResult {
            video_id: s.video_id.clone().expect("filtered on video_id"),
            prediction: p,
            target: s.nutrition,
        })
        .collect())
}

/// Protocol 1: every frame `i` with `i % stride == 0` of every test video.
pub fn evaluate_protocol1(
    predictor: &dyn NutritionPredictor,
    manifest: &DatasetManifest,
    stride: usize,
) -> Result<EvalReport> {
    protocol1_from_frames(&frame_results(predictor, manifest, stride)?, means_of(manifest)?)
}

/// Protocol 2: one frame per video, the one whose prediction has the lowest
/// mean relative error against the ground truth. This is an oracle
/// protocol; the labels drive the selection.
pub fn evaluate_protocol2(predictor: &dyn NutritionPredictor, manifest: &DatasetManifest) -> Result<EvalReport> {
    protocol2_from_frames(&frame_results(predictor, manifest, 1)?, means_of(manifest)?)
}

pub fn protocol1_from_frames(frames: &[FrameResult], means: NutritionVector) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds: Vec<_> = frames.iter().map(|f| f.prediction).collect();
    let targets: Vec<_> = frames.iter().map(|f| f.target).collect();
    let mut r = EvalReport::from_predictions(Protocol::Protocol1, &preds, &targets, means)?;
    let obj = frames
        .iter()
        .map(|f| relative_error(&f.prediction.clamped(), &f.target, &means))
        .sum::<f64>()
        / frames.len() as f64;
    r.selection_objective = Some(obj);
    Ok(r)
}

/// Index of the selected frame for each video, in video id order. Ties go
/// to the earliest frame.
pub fn select_optimal_frames(frames: &[FrameResult], means: &NutritionVector) -> Vec<usize> {
    let mut best: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (i, f) in frames.iter().enumerate() {
        let err = relative_error(&f.prediction.clamped(), &f.target, means);
        best.entry(&f.video_id)
            .and_modify(|b| {
                if err < b.1 {
                    *b = (i, err);
                }
            })
            .or_insert((i, err));
    }
    best.values().map(|&(i, _)| i).collect()
}

pub fn protocol2_from_frames(frames: &[FrameResult], means: NutritionVector) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let picked = select_optimal_frames(frames, &means);
    let preds: Vec<_> = picked.iter().map(|&i| frames[i].prediction).collect();
    let targets: Vec<_> = picked.iter().map(|&i| frames[i].target).collect();
    let mut r = EvalReport::from_predictions(Protocol::Protocol2, &preds, &targets, means)?;
    let obj = picked
        .iter()
        .map(|&i| relative_error(&frames[i].prediction.clamped(), &frames[i].target, &means))
        .sum::<f64>()
        / picked.len() as f64;
    r.selection_objective = Some(obj);
    Ok(r)
}
