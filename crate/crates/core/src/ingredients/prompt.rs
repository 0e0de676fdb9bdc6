use crate::data::NutritionVector;
use crate::error::{Error, Result};

pub const PLACEHOLDERS: [&str; 5] = ["{cal}", "{fat}", "{carb}", "{pro}", "{N}"];

/// Template for the diet-suggestion dialogue request.
pub const DEFAULT_DIALOGUE_TEMPLATE: &str = include_str!("../../assets/prompts/dialogue.txt");

/// Prompt asking a multimodal model for the visible ingredients.
pub const DEFAULT_INGREDIENT_PROMPT: &str = include_str!("../../assets/prompts/ingredients.txt");

/// Fills the five nutrition/turn placeholders of a dialogue template.
pub fn build_dialogue_prompt(
    nutrition: &NutritionVector,
    n_turns: usize,
    template: &str,
) -> Result<String> {
    if !(2..=5).contains(&n_turns) {
        return Err(Error::TurnRange(n_turns));
    }
    if let Some(missing) = PLACEHOLDERS.iter().find(|p| !template.contains(**p)) {
        return Err(Error::MissingPlaceholder(missing));
    }
    let values = [
        nutrition.calories.to_string(),
        nutrition.fat.to_string(),
        nutrition.carbohydrates.to_string(),
        nutrition.protein.to_string(),
        n_turns.to_string(),
    ];
    let mut out = template.to_string();
    for (p, v) in PLACEHOLDERS.iter().zip(values) {
        out = out.replace(p, &v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "cal={cal},fat={fat},carb={carb},pro={pro},N={N}";

    #[test]
    fn substitutes_values() {
        let n = NutritionVector::new(250.0, 10.5, 30.0, 8.0);
        assert_eq!(
            build_dialogue_prompt(&n, 3, FULL).unwrap(),
            "cal=250,fat=10.5,carb=30,pro=8,N=3"
        );
    }

    #[test]
    fn turn_range_enforced() {
        let n = NutritionVector::default();
        assert!(matches!(build_dialogue_prompt(&n, 6, FULL), Err(Error::TurnRange(6))));
        assert!(matches!(build_dialogue_prompt(&n, 1, FULL), Err(Error::TurnRange(1))));
        assert!(build_dialogue_prompt(&n, 2, FULL).is_ok());
        assert!(build_dialogue_prompt(&n, 5, FULL).is_ok());
    }

    #[test]
    fn missing_placeholder_reported() {
        let n = NutritionVector::default();
        let err = build_dialogue_prompt(&n, 3, "cal={cal},fat={fat},carb={carb},N={N}").unwrap_err();
        assert!(matches!(err, Error::MissingPlaceholder("{pro}")));
    }

    #[test]
    fn bundled_template_leaves_no_placeholders() {
        let n = NutritionVector::new(540.0, 28.0, 45.0, 25.0);
        let out = build_dialogue_prompt(&n, 4, DEFAULT_DIALOGUE_TEMPLATE).unwrap();
        assert!(PLACEHOLDERS.iter().all(|p| !out.contains(p)));
        assert!(out.contains("540 kcal"));
    }
}
