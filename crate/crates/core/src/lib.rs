//! Roadside camera perception downstream of the detector: camera models,
//! landmark calibration, lookup-table localization, detection-head kernels,
//! world-frame tracking, multi-camera fusion, a roundabout simulator and
//! evaluation metrics.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod camera;
pub mod detection;
pub mod error;
pub mod fusion;
pub mod geo;
pub mod homography;
pub mod lm;
pub mod localization;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod tracker;

pub use error::{Error, ErrorKind, Result};
