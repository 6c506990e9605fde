//! Allo-centric and ego-centric dynamic occupancy grids, from simulated lidar
//! to sequence prediction and evaluation.
//!
//! The pipeline runs in stages:
//!
//! 1. [`scene`] simulates urban-like scenes and a planar lidar.
//! 2. [`filter`] maintains four-state occupancy grids (static, dynamic, free,
//!    unknown) from sensor frames.
//! 3. [`frame`] runs the filter in a world-fixed (allo-centric) frame and in
//!    the ego-attached frame, including large-ego-grid fusion.
//! 4. [`image`] maps grids to RGB probability images (R unknown, G dynamic,
//!    B static).
//! 5. [`sequence`] cuts input/target sequences, computes common-visibility
//!    masks and reads/writes the on-disk dataset.
//! 6. [`predict`] holds classical baseline predictors and the external
//!    predictor protocol.
//! 7. [`eval`] scores predictions (weighted channel loss, MSE, SSIM) and
//!    renders horizon curves and comparison strips.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod filter;
pub mod frame;
pub mod geometry;
pub mod image;
pub mod par;
pub mod predict;
pub mod scene;
pub mod sequence;

pub use error::{Error, Result};
pub use geometry::Pose2D;
