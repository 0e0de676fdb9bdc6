use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four regression targets, in head order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Calories,
    Fat,
    Carbohydrates,
    Protein,
}

impl Field {
    pub const ALL: [Field; 4] = [
        Field::Calories,
        Field::Fat,
        Field::Carbohydrates,
        Field::Protein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Calories => "calories",
            Field::Fat => "fat",
            Field::Carbohydrates => "carbohydrates",
            Field::Protein => "protein",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Field::Calories => "Caloric",
            Field::Fat => "Fat",
            Field::Carbohydrates => "Carb",
            Field::Protein => "Protein",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ground-truth nutrition: kilocalories and grams of fat, carbohydrates and
/// protein.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NutritionVector {
    pub calories: f64,
    pub fat: f64,
    pub carbohydrates: f64,
    pub protein: f64,
}

impl NutritionVector {
    pub fn new(calories: f64, fat: f64, carbohydrates: f64, protein: f64) -> Self {
        Self {
            calories,
            fat,
            carbohydrates,
            protein,
        }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.calories, self.fat, self.carbohydrates, self.protein]
    }

    pub fn get(&self, field: Field) -> f64 {
        self.to_array()[field.index()]
    }

    /// Checks every amount is finite and non-negative.
    pub fn validate(&self, sample_id: &str) -> Result<()> {
        for field in Field::ALL {
            let value = self.get(field);
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Unit {
                    sample_id: sample_id.to_string(),
                    field: field.name(),
                    value,
                });
            }
        }
        Ok(())
    }

    /// Per-field arithmetic mean. `None` for an empty input.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a NutritionVector>) -> Option<Self> {
        let mut sum = [0.0f64; 4];
        let mut n = 0usize;
        for v in items {
            for (s, x) in sum.iter_mut().zip(v.to_array()) {
                *s += x;
            }
            n += 1;
        }
        (n > 0).then(|| Self::from_array(sum.map(|s| s / n as f64)))
    }
}

/// Model output for one image. Unconstrained in sign; reports clamp at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NutritionPrediction {
    pub calories: f64,
    pub fat: f64,
    pub carbohydrates: f64,
    pub protein: f64,
}

impl NutritionPrediction {
    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            calories: v[0],
            fat: v[1],
            carbohydrates: v[2],
            protein: v[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.calories, self.fat, self.carbohydrates, self.protein]
    }

    pub fn get(&self, field: Field) -> f64 {
        self.to_array()[field.index()]
    }

    pub fn clamped(self) -> Self {
        Self::from_array(self.to_array().map(|v| v.max(0.0)))
    }
}

impl From<NutritionVector> for NutritionPrediction {
    fn from(v: NutritionVector) -> Self {
        Self::from_array(v.to_array())
    }
}
