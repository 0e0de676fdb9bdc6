//! Fixtures shared by the benchmarks.

use std::collections::BTreeSet;

use candle_core::{DType, Device, Tensor};
use nutrifuse_core::embedding::StubEncoder;
use nutrifuse_core::inference::IngredientPredictionSet;
use nutrifuse_core::model::{Backbone, FusionConfig, ModelSpec, NutritionModel};

/// `k` views drawn from a pool of `pool` names with a fixed LCG, each name
/// present with probability about 0.4.
pub fn prediction_set(k: usize, pool: usize, seed: u64) -> IngredientPredictionSet {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) as f64 / (1u64 << 31) as f64
    };
    let views = (0..k)
        .map(|_| {
            (0..pool)
                .filter(|_| next() < 0.4)
                .map(|i| format!("ingredient {i}"))
                .collect::<BTreeSet<_>>()
        })
        .collect();
    IngredientPredictionSet::new(views)
}

/// Tiny-scale model at 32 px with a stub encoder.
pub fn tiny_model(backbone: Backbone, dim: usize) -> (NutritionModel, StubEncoder) {
    let enc = StubEncoder::new(dim, 0);
    let px = if backbone == Backbone::InceptionV3 { 299 } else { 32 };
    let fusion = FusionConfig::tiny(backbone).with_resolution(px);
    let model = NutritionModel::new(ModelSpec::new(fusion, &enc), 0, DType::F32, &Device::Cpu)
        .expect("tiny model");
    (model, enc)
}

pub fn images(batch: usize, px: usize) -> Tensor {
    let n = batch * 3 * px * px;
    let v: Vec<f32> = (0..n).map(|i| ((i * 7919 % 997) as f32 / 498.5) - 1.0).collect();
    Tensor::from_vec(v, (batch, 3, px, px), &Device::Cpu).expect("image tensor")
}
