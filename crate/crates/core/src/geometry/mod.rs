//! Rigid-transform algebra, camera projection and the analytic reprojection
//! Jacobians consumed by every solver in the crate.

mod camera;
mod se3;

pub use camera::{CameraModel, Pixel};
pub use se3::{hat, vee, RigidTransform, TangentVector};

use nalgebra::Vector3;

use crate::scalar::Real;

/// Apply `transform` to a point: `R·p + t`.
pub fn transform_point<T: Real>(transform: &RigidTransform<T>, point: &Vector3<T>) -> Vector3<T> {
    transform.transform_point(point)
}

/// Closed-form SE(3) exponential map.
pub fn se3_exp<T: Real>(xi: &TangentVector<T>) -> RigidTransform<T> {
    RigidTransform::exp(xi)
}
