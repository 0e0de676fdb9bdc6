use std::collections::HashMap;

use candle_core::{Device, Tensor};
use image::imageops::FilterType;
use image::{DynamicImage, RgbImage};

use super::manifest::{DatasetManifest, Sample};
use crate::error::{Error, Result};

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Resolves a sample to its decoded image.
pub trait ImageSource: Send + Sync {
    fn load(&self, manifest: &DatasetManifest, sample: &Sample) -> Result<DynamicImage>;
}

/// Reads images from disk relative to the manifest root.
#[derive(Debug, Clone, Copy, Default)]
pub struct FsImageSource;

impl ImageSource for FsImageSource {
    fn load(&self, manifest: &DatasetManifest, sample: &Sample) -> Result<DynamicImage> {
        let path = manifest.image_path(sample);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(image::load_from_memory(&bytes)?)
    }
}

/// Images held in memory, keyed by the sample's image reference.
#[derive(Debug, Clone, Default)]
pub struct MemoryImageSource {
    images: HashMap<String, DynamicImage>,
}

impl MemoryImageSource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_ref: impl Into<String>, image: DynamicImage) {
        self.images.insert(image_ref.into(), image);
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl ImageSource for MemoryImageSource {
    fn load(&self, _: &DatasetManifest, sample: &Sample) -> Result<DynamicImage> {
        self.images
            .get(&sample.image_ref)
            .cloned()
            .ok_or_else(|| Error::InvalidSample {
                sample_id: sample.sample_id.clone(),
                reason: format!("no image `{}` in memory source", sample.image_ref),
            })
    }
}

/// Square resize, skipped when the image already has the target size.
pub fn resize_to(image: &DynamicImage, side: usize) -> DynamicImage {
    let side = side as u32;
    if image.width() == side && image.height() == side {
        image.clone()
    } else {
        image.resize_exact(side, side, FilterType::Triangle)
    }
}

/// `(3, side, side)` f32 tensor with ImageNet normalisation, optionally
/// mirrored left to right.
pub fn image_to_tensor(image: &DynamicImage, side: usize, hflip: bool, device: &Device) -> Result<Tensor> {
    let mut rgb: RgbImage = resize_to(image, side).to_rgb8();
    if hflip {
        image::imageops::flip_horizontal_in_place(&mut rgb);
    }
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            let v = px.0[c] as f32 / 255.0;
            data[c * h * w + y as usize * w + x as usize] = (v - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
        }
    }
    Ok(Tensor::from_vec(data, (3, h, w), device)?)
}
