//! Error metrics, the single-image and video-frame evaluation protocols,
//! and report rendering.

mod metrics;
mod protocols;
mod report;

pub use metrics::{mae_per_field, relative_percent};
pub use protocols::{
    evaluate_protocol1, evaluate_protocol2, evaluate_single_image, protocol1_from_frames,
    protocol2_from_frames, select_optimal_frames, FrameResult, NutritionPredictor,
};
pub use report::{format_cell, render_report, EvalReport, FieldScore, Protocol};
