use std::fs;
use std::path::Path;

use image::{DynamicImage, Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::images::MemoryImageSource;
use super::manifest::{save_manifest, DatasetManifest, Sample, Source};
use super::nutrition::NutritionVector;
use crate::error::{Error, Result};
use crate::ingredients::IngredientVocabulary;
use crate::util::seeded_rng;

/// Generated dishes whose nutrition is a portion-weighted sum of
/// per-ingredient profiles. Each ingredient is drawn as a coloured patch
/// whose area follows its portion, so both the image and the ingredient list
/// carry signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_images: usize,
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub image_size: u32,
    pub min_ingredients: usize,
    pub max_ingredients: usize,
    /// Ingredients are drawn from the first `pool_size` canonical names that
    /// have synonyms.
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_images: 64,
            n_videos: 0,
            frames_per_video: 5,
            image_size: 64,
            min_ingredients: 2,
            max_ingredients: 5,
            pool_size: 12,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_images + self.n_videos == 0 {
            return Err(Error::InvalidConfig("synthetic dataset would be empty".into()));
        }
        if self.min_ingredients < 1 || self.min_ingredients > self.max_ingredients {
            return Err(Error::InvalidConfig(format!(
                "ingredient count range {}..={} is empty",
                self.min_ingredients, self.max_ingredients
            )));
        }
        if self.max_ingredients > self.pool_size {
            return Err(Error::InvalidConfig("max_ingredients exceeds pool_size".into()));
        }
        if self.image_size < 8 || self.frames_per_video < 1 {
            return Err(Error::InvalidConfig("image_size must be ≥ 8 and frames_per_video ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub images: MemoryImageSource,
    image_list: Vec<(String, DynamicImage)>,
}

impl SyntheticDataset {
    /// Writes the images as PNG files and `manifest.jsonl` under `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (rel, img) in &self.image_list {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            img.save(&path)?;
        }
        save_manifest(&self.manifest, dir.join("manifest.jsonl"))
    }
}

/// Nutrition contributed by one full portion of `name`.
pub fn ingredient_profile(name: &str, seed: u64) -> NutritionVector {
    let mut rng = seeded_rng(seed, &[b"profile", name.as_bytes()]);
    NutritionVector::new(
        rng.random_range(40.0..250.0),
        rng.random_range(0.0..20.0),
        rng.random_range(0.0..35.0),
        rng.random_range(0.0..20.0),
    )
}

fn ingredient_colour(name: &str, seed: u64) -> Rgb<u8> {
    let mut rng = seeded_rng(seed, &[b"colour", name.as_bytes()]);
    Rgb([rng.random_range(30..=255), rng.random_range(30..=255), rng.random_range(30..=255)])
}

struct Dish {
    ingredients: Vec<String>,
    portions: Vec<f64>,
    nutrition: NutritionVector,
}

fn draw_dish<R: Rng>(dish: &Dish, size: u32, seed: u64, rng: &mut R) -> DynamicImage {
    let bg = Rgb([rng.random_range(0..40), rng.random_range(0..40), rng.random_range(0..40)]);
    let mut img = RgbImage::from_pixel(size, size, bg);
    for (ing, &portion) in dish.ingredients.iter().zip(&dish.portions) {
        let side = ((size as f64) * 0.28 * portion.sqrt()).round().clamp(2.0, size as f64) as u32;
        let x0 = rng.random_range(0..=size - side);
        let y0 = rng.random_range(0..=size - side);
        let colour = ingredient_colour(ing, seed);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                img.put_pixel(x, y, colour);
            }
        }
    }
    DynamicImage::ImageRgb8(img)
}

/// Deterministic synthetic dataset for `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec, vocab: &IngredientVocabulary) -> Result<SyntheticDataset> {
    spec.validate()?;
    let pool: Vec<&str> = vocab
        .canonical()
        .filter(|c| !vocab.synonyms(c).is_empty())
        .take(spec.pool_size)
        .collect();
    if pool.len() < spec.pool_size {
        return Err(Error::InvalidConfig(format!(
            "vocabulary has only {} ingredients with synonyms",
            pool.len()
        )));
    }
    let mut rng = seeded_rng(spec.seed, &[b"synthetic"]);
    let new_dish = |rng: &mut rand_chacha::ChaCha8Rng| -> Dish {
        let n = rng.random_range(spec.min_ingredients..=spec.max_ingredients);
        let ingredients: Vec<String> = pool.choose_multiple(rng, n).map(|s| s.to_string()).collect();
        let portions: Vec<f64> = ingredients.iter().map(|_| rng.random_range(0.5..1.5)).collect();
        let mut total = [0.0; 4];
        for (ing, &p) in ingredients.iter().zip(&portions) {
            for (t, v) in total.iter_mut().zip(ingredient_profile(ing, spec.seed).to_array()) {
                *t += p * v;
            }
        }
        Dish {
            ingredients,
            portions,
            nutrition: NutritionVector::from_array(total),
        }
    };

    let mut samples = Vec::new();
    let mut images = MemoryImageSource::new();
    let mut image_list = Vec::new();
    let category = |d: &Dish| format!("dish-{}", d.ingredients.len());
    for i in 0..spec.n_images {
        let dish = new_dish(&mut rng);
        let image_ref = format!("images/{i:05}.png");
        let img = draw_dish(&dish, spec.image_size, spec.seed, &mut rng);
        images.insert(image_ref.clone(), img.clone());
        image_list.push((image_ref.clone(), img));
        samples.push(Sample {
            sample_id: format!("img-{i:05}"),
            image_ref,
            category: category(&dish),
            ingredients: dish.ingredients.clone(),
            nutrition: dish.nutrition,
            source: Source::Official,
            video_id: None,
            frame_index: None,
        });
    }
    for v in 0..spec.n_videos {
        let dish = new_dish(&mut rng);
        let video_id = format!("vid-{v:04}");
        for f in 0..spec.frames_per_video {
            let image_ref = super::frame_image_ref(&video_id, f as u64);
            // frames differ only in patch placement
            let img = draw_dish(&dish, spec.image_size, spec.seed, &mut rng);
            images.insert(image_ref.clone(), img.clone());
            image_list.push((image_ref.clone(), img));
            samples.push(Sample {
                sample_id: format!("{video_id}-f{f:03}"),
                image_ref,
                category: category(&dish),
                ingredients: dish.ingredients.clone(),
                nutrition: dish.nutrition,
                source: Source::VideoFrame,
                video_id: Some(video_id.clone()),
                frame_index: Some(f as u64),
            });
        }
    }
    Ok(SyntheticDataset {
        manifest: DatasetManifest::new(samples)?,
        images,
        image_list,
    })
}
