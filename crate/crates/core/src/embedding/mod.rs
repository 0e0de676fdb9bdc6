//! Ingredient text embeddings: the encoder interface, a persistent cache,
//! mean aggregation and the learnable ingredient projector.

mod cache;
#[cfg(feature = "clip")]
mod clip;
mod encoder;
mod projector;

pub use cache::CachedEncoder;
#[cfg(feature = "clip")]
pub use clip::{ClipTextEncoder, ClipTextSettings};
pub use encoder::{
    aggregate_ingredients, aggregate_with, embed_ingredient, EmbeddingVector, StubEncoder,
    TextEncoder,
};
pub use projector::{embedding_tensor, project_ingredient_feature, ProjectorParams};
