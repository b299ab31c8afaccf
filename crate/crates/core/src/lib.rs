//! Self-supervised camera-motion imitation from video: homography
//! pseudo-ground-truth estimation, importance sampling of motion-bearing
//! clips, augmentation-consistent motion transforms, baseline and learnable
//! motion predictors, and the evaluation suite, all verifiable end to end
//! against a synthetic planar-scene oracle.

pub mod augmentation;
pub mod classify;
pub mod estimation;
pub mod evaluation;
pub mod frame;
pub mod geometry;
pub mod manifest;
pub mod pipeline;
pub mod predictor;
pub mod sampling;
pub mod synthetic;

pub use classify::{classify, motion_magnitude, MotionClass};
pub use estimation::{estimate_motion, EstimationError, EstimatorConfig, RansacConfig};
pub use frame::GrayFrame;
pub use geometry::{
    four_point_from_matrix, matrix_from_four_point, FourPointDelta, FrameGeometry, GeometryError,
    Homography, Point2,
};
pub use sampling::{
    anchors, compute_sigma, enumerate_clips, importance_sample, valid_starts, Clip, ClipSpec,
    MotionTrack,
};
