use image::{DynamicImage, GrayImage, Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::resize_to;
use crate::error::{Error, Result};
use crate::util::seeded_rng;

/// Smallest crop area allowed, as a fraction of the original image.
pub const MIN_CROP_AREA_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    Identity,
    /// Uniform angle in `[-max_degrees, max_degrees]`, black fill.
    Rotation { max_degrees: f64 },
    HorizontalFlip,
    /// Axis-aligned crop covering at least `min_area_fraction` of the image.
    RandomCrop { min_area_fraction: f64 },
    Grayscale,
}

/// The `K` test-time views: view `k` (1-based) applies `transforms[k - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    pub transforms: Vec<Transform>,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            transforms: vec![
                Transform::Identity,
                Transform::Rotation { max_degrees: 15.0 },
                Transform::HorizontalFlip,
                Transform::RandomCrop {
                    min_area_fraction: MIN_CROP_AREA_FRACTION,
                },
                Transform::Grayscale,
            ],
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    /// The default views without the untouched original.
    pub fn without_identity() -> Self {
        let mut s = Self::default();
        s.transforms.retain(|t| *t != Transform::Identity);
        s
    }

    pub fn k(&self) -> usize {
        self.transforms.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.is_empty() {
            return Err(Error::InvalidConfig("at least one augmentation is required".into()));
        }
        for t in &self.transforms {
            match *t {
                Transform::RandomCrop { min_area_fraction: a } if !(MIN_CROP_AREA_FRACTION..=1.0).contains(&a) => {
                    return Err(Error::InvalidConfig(format!(
                        "min_area_fraction {a} must lie in [{MIN_CROP_AREA_FRACTION}, 1]"
                    )));
                }
                Transform::Rotation { max_degrees: d } if !(d.is_finite() && d >= 0.0) => {
                    return Err(Error::InvalidConfig(format!("rotation range {d} is invalid")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Crop rectangle `(x, y, width, height)` for an image of `width x height`.
/// Side fractions `fw, fh` with `fw * fh = a` are drawn so that both stay
/// in `[a, 1]`; rounding up keeps the area at or above `a`.
pub fn crop_rect<R: Rng + ?Sized>(width: u32, height: u32, min_area_fraction: f64, rng: &mut R) -> (u32, u32, u32, u32) {
    let a = rng.random_range(min_area_fraction..=1.0);
    let fw = rng.random_range(a..=1.0);
    let fh = a / fw;
    let cw = ((fw * width as f64).ceil() as u32).clamp(1, width);
    let ch = ((fh * height as f64).ceil() as u32).clamp(1, height);
    let x = rng.random_range(0..=width - cw);
    let y = rng.random_range(0..=height - ch);
    (x, y, cw, ch)
}

fn rotate(img: &RgbImage, degrees: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    RgbImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        // inverse mapping: rotate the output position back into the source
        let sx = c * dx + s * dy + cx;
        let sy = -s * dx + c * dy + cy;
        bilinear(img, sx, sy)
    })
}

fn bilinear(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = img.dimensions();
    if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
        return Rgb([0, 0, 0]);
    }
    let (x0, y0) = (x.floor() as u32, y.floor() as u32);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let mut out = [0u8; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let p = |xx, yy| img.get_pixel(xx, yy).0[ch] as f64;
        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
        *o = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

/// Applies one transform with randomness from `rng`.
pub fn apply_transform<R: Rng + ?Sized>(image: &DynamicImage, t: &Transform, rng: &mut R) -> DynamicImage {
    match *t {
        Transform::Identity => image.clone(),
        Transform::Rotation { max_degrees } => {
            let deg = if max_degrees > 0.0 {
                rng.random_range(-max_degrees..=max_degrees)
            } else {
                0.0
            };
            DynamicImage::ImageRgb8(rotate(&image.to_rgb8(), deg))
        }
        Transform::HorizontalFlip => image.fliph(),
        Transform::RandomCrop { min_area_fraction } => {
            let (x, y, w, h) = crop_rect(image.width(), image.height(), min_area_fraction, rng);
            image.crop_imm(x, y, w, h)
        }
        Transform::Grayscale => {
            let g: GrayImage = image.to_luma8();
            DynamicImage::ImageRgb8(RgbImage::from_fn(g.width(), g.height(), |x, y| {
                let v = g.get_pixel(x, y).0[0];
                Rgb([v, v, v])
            }))
        }
    }
}

/// View `k` (1-based) of `image`, resized to `resolution x resolution`.
/// Deterministic for a fixed `(spec.seed, k)`.
pub fn augment_image(image: &DynamicImage, k: usize, spec: &AugmentationSpec, resolution: usize) -> Result<DynamicImage> {
    if k == 0 || k > spec.k() {
        return Err(Error::IndexOutOfRange { index: k, len: spec.k() });
    }
    let mut rng = seeded_rng(spec.seed, &[b"augmentation", &(k as u64).to_le_bytes()]);
    let out = apply_transform(image, &spec.transforms[k - 1], &mut rng);
    Ok(resize_to(&out, resolution))
}
