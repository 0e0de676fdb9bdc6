//! Dataset schema, manifest ingestion, stratified splitting, video-frame
//! sampling, image loading and a synthetic generator.

mod frames;
mod images;
mod manifest;
mod nutrition;
mod split;
mod synthetic;

pub use frames::{extract_frames, frame_image_ref, VideoRecord};
pub use images::{
    image_to_tensor, resize_to, FsImageSource, ImageSource, MemoryImageSource, IMAGENET_MEAN,
    IMAGENET_STD,
};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, Sample, Source};
pub use nutrition::{Field, NutritionPrediction, NutritionVector};
pub use split::{split_dataset, SplitSpec};
pub use synthetic::{generate_synthetic, ingredient_profile, SyntheticDataset, SyntheticSpec};
