//! Targetless LiDAR–camera extrinsic calibration.
//!
//! The pipeline estimates the rigid transform taking LiDAR points into the
//! camera frame from 2D–3D point and line correspondences:
//!
//! 1. [`initial::ransac_pnp`] finds a rough pose from point features alone;
//! 2. [`initial::joint_refine`] polishes it on inlier points and lines;
//! 3. [`refine::refine`] runs Levenberg-Marquardt on a cost whose per-feature
//!    weights come from [`contribution`] analysis of the Hessian.
//!
//! [`evaluation::nre`] scores a result against checkerboard corners, and
//! [`synth`] builds scenes with known ground truth.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contribution;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod image;
pub mod initial;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod refine;
pub mod render;
pub mod scalar;
pub mod solver;
pub mod synth;
pub mod system;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type Transform = geometry::RigidTransform<f64>;
pub type Camera = geometry::CameraModel<f64>;
pub type Features = features::FeatureSet<f64>;
pub type Corners = evaluation::CornerSet<f64>;

pub type Transform32 = geometry::RigidTransform<f32>;
pub type Camera32 = geometry::CameraModel<f32>;
pub type Features32 = features::FeatureSet<f32>;
