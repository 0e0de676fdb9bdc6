use serde::{Deserialize, Serialize};

use super::manifest::{Sample, Source};
use super::nutrition::NutritionVector;
use crate::error::{Error, Result};

/// One dish video. Every frame inherits the dish-level label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub frame_count: u64,
    #[serde(flatten)]
    pub nutrition: NutritionVector,
    #[serde(default)]
    pub ingredients: Vec<String>,
    #[serde(default)]
    pub category: Option<String>,
}

/// Relative path of an extracted frame image.
pub fn frame_image_ref(video_id: &str, frame: u64) -> String {
    format!("frames/{video_id}/{frame:06}.png")
}

/// Emits frames `0, stride, 2*stride, ...` below each video's frame count.
pub fn extract_frames(videos: &[VideoRecord], stride: usize) -> Result<Vec<Sample>> {
    if stride < 1 {
        return Err(Error::BadStride(stride as i64));
    }
    let mut out = Vec::new();
    for v in videos {
        if v.frame_count < 1 {
            return Err(Error::InvalidInput(format!(
                "video `{}` has no frames",
                v.video_id
            )));
        }
        v.nutrition.validate(&v.video_id)?;
        for frame in (0..v.frame_count).step_by(stride) {
            out.push(Sample {
                sample_id: format!("{}#{frame:06}", v.video_id),
                image_ref: frame_image_ref(&v.video_id, frame),
                category: v.category.clone().unwrap_or_else(|| v.video_id.clone()),
                ingredients: v.ingredients.clone(),
                nutrition: v.nutrition,
                source: Source::VideoFrame,
                video_id: Some(v.video_id.clone()),
                frame_index: Some(frame),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(id: &str, frames: u64) -> VideoRecord {
        VideoRecord {
            video_id: id.into(),
            frame_count: frames,
            nutrition: NutritionVector::new(300.0, 12.0, 20.0, 15.0),
            ingredients: vec!["rice".into()],
            category: None,
        }
    }

    #[test]
    fn every_fifth_frame() {
        let s = extract_frames(&[video("v1", 12)], 5).unwrap();
        let idx: Vec<_> = s.iter().map(|s| s.frame_index.unwrap()).collect();
        assert_eq!(idx, vec![0, 5, 10]);
        assert!(s.iter().all(|s| s.source == Source::VideoFrame && s.nutrition.calories == 300.0));
    }

    #[test]
    fn single_frame_video() {
        let s = extract_frames(&[video("v1", 1)], 5).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].frame_index, Some(0));
    }

    #[test]
    fn zero_stride_rejected() {
        assert!(matches!(extract_frames(&[video("v", 3)], 0), Err(Error::BadStride(0))));
    }

    #[test]
    fn corpus_scale_frame_count() {
        // 2,300 videos x 500 frames sampled every 5th frame -> 230,000 training frames
        let videos: Vec<_> = (0..2300).map(|i| video(&format!("dish{i}"), 500)).collect();
        let total: u64 = videos.iter().map(|v| v.frame_count).sum();
        assert_eq!(total, 230_000 * 5);
        assert_eq!(extract_frames(&videos, 5).unwrap().len(), 230_000);
    }

    proptest! {
        #[test]
        fn length_is_ceil_of_count_over_stride(frames in 1u64..400, stride in 1usize..40) {
            let s = extract_frames(&[video("v", frames)], stride).unwrap();
            prop_assert_eq!(s.len() as u64, frames.div_ceil(stride as u64));
        }
    }
}
