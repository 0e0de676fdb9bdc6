//! Ingredient normalization, training-time robustness transforms and prompt
//! templates.

mod normalize;
mod prompt;
mod robust;
mod vocab;

pub use normalize::{clean_term, normalize_ingredient};
pub use prompt::{
    build_dialogue_prompt, DEFAULT_DIALOGUE_TEMPLATE, DEFAULT_INGREDIENT_PROMPT, PLACEHOLDERS,
};
pub use robust::{
    apply_robustness, apply_synonym_replacement, sample_ingredient_subset, RobustnessConfig,
    RobustnessOrder,
};
pub use vocab::{IngredientVocabulary, VagueTarget, REJECT_MARKER};
