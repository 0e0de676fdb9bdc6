//! Test-time ingredient prediction: augmented views, a multimodal client,
//! majority voting, then a fused forward pass.

mod audit;
mod augment;
mod client;
mod pipeline;
mod vote;

pub use audit::{read_audit_log, write_audit_log, AuditRecord};
pub use augment::{
    apply_transform, augment_image, crop_rect, AugmentationSpec, Transform, MIN_CROP_AREA_FRACTION,
};
pub use client::{
    encode_png, parse_reply, query_ingredients, HttpClient, HttpClientConfig, MultimodalClient,
    NoiseConfig, NoisyClient, OracleClient, ParsedReply,
};
pub use pipeline::{predict_with_augmented_ingredients, AugmentedInference, AugmentedPrediction, AugmentedPredictor};
pub use vote::{majority_vote, majority_vote_detailed, threshold_vote, IngredientPredictionSet, VoteConfig};
