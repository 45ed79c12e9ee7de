//! Scoring of predicted masks and the end-to-end evaluation pipeline.

pub mod metrics;
pub mod overlay;
pub mod pipeline;

pub use metrics::{
    alignment_error, connected_components, dice_coefficient, lesion_prf, AlignmentError, LesionInstance, LesionMatching,
    LesionScores, Match,
};
pub use overlay::{most_informative_slice, overlay_rgb, write_overlay_png};
pub use pipeline::{
    evaluate_dataset, predict_volume, AlignmentSummary, CaseMetrics, EvalCase, EvalConfig, MetricsReport, SlicePredictor,
    Timings, VolumePrediction, PROB_THRESHOLD,
};
