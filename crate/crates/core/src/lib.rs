//! Nutrition estimation from food images with ingredient-aware visual
//! feature fusion.
//!
//! Ingredient names are embedded with a frozen text encoder, averaged,
//! projected to the channel width of a chosen backbone stage and fused into
//! the visual features: added channel-wise for convolutional backbones, or
//! inserted as an extra token for vision transformers. Four two-layer heads
//! regress calories, fat, carbohydrates and protein. At test time the
//! ingredient list can come from a multimodal model queried on augmented
//! views of the image, filtered by majority vote.

pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod inference;
pub mod ingredients;
pub mod model;
pub mod training;
mod util;

pub use data::{DatasetManifest, Field, NutritionPrediction, NutritionVector, Sample, Source};
pub use error::{Error, ErrorKind, Result};
