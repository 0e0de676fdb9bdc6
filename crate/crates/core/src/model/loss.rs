use candle_core::Tensor;

use crate::data::{NutritionPrediction, NutritionVector};
use crate::error::{Error, Result};

/// Loss weight of the Inception auxiliary heads during training.
pub const AUX_LOSS_WEIGHT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean absolute error per field, in [`crate::Field::ALL`] order.
    pub per_task: [f64; 4],
}

/// Sum over the four fields of the per-field mean absolute error.
pub fn compute_loss(preds: &[NutritionPrediction], targets: &[NutritionVector]) -> Result<LossBreakdown> {
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_task = [0.0; 4];
    for (p, t) in preds.iter().zip(targets) {
        let (p, t) = (p.to_array(), t.to_array());
        for i in 0..4 {
            per_task[i] += (p[i] - t[i]).abs();
        }
    }
    let n = preds.len() as f64;
    per_task.iter_mut().for_each(|x| *x /= n);
    Ok(LossBreakdown {
        total: per_task.iter().sum(),
        per_task,
    })
}

/// Differentiable form on `(B, 4)` tensors; returns the scalar total and
/// the `(4)` per-task means.
pub fn loss_tensor(preds: &Tensor, targets: &Tensor) -> Result<(Tensor, Tensor)> {
    if preds.dims() != targets.dims() {
        return Err(Error::shape(format!("{:?}", targets.dims()), format!("{:?}", preds.dims())));
    }
    let per_task = preds.sub(targets)?.abs()?.mean(0)?;
    Ok((per_task.sum_all()?, per_task))
}
