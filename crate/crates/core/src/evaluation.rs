//! Normalized reprojection error over checkerboard corners.
//!
//! Each 3D corner is projected with the extrinsic under test and matched to
//! its nearest 2D detection. The pixel error is scaled by the corner's range
//! from the LiDAR origin relative to the farthest corner, and the scaled
//! errors are averaged.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pixel, RigidTransform};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct CornerSet<T: Real> {
    /// Corners in the LiDAR frame, meters.
    pub corners3d: Vec<Vector3<T>>,
    /// Detected image corners, pixels.
    pub corners2d: Vec<Pixel<T>>,
}

impl<T: Real> CornerSet<T> {
    pub fn new(corners3d: Vec<Vector3<T>>, corners2d: Vec<Pixel<T>>) -> Result<Self> {
        if corners3d.is_empty() || corners2d.is_empty() {
            return Err(Error::EmptyCornerSet);
        }
        let finite = corners3d.iter().flat_map(|p| p.iter()).all(|x| x.is_finite())
            && corners2d.iter().all(Pixel::is_finite);
        if !finite {
            return Err(Error::Geometry("corner set has non-finite values".into()));
        }
        Ok(Self {
            corners3d,
            corners2d,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerError<T: Real> {
    pub projected: Pixel<T>,
    /// Index into `corners2d` of the nearest detection.
    pub matched: usize,
    pub pixel_error: T,
    /// Distance of the 3D corner from the LiDAR origin, meters.
    pub range: T,
    /// `range / max range`.
    pub factor: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NreReport<T: Real> {
    pub nre: T,
    pub corners: Vec<CornerError<T>>,
}

/// Options for [`nre_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NreOptions {
    /// Ignore lens distortion when projecting (plain `K·[R|t]` projection).
    pub pinhole_only: bool,
}

pub fn nre<T: Real>(
    extrinsic: &RigidTransform<T>,
    cam: &CameraModel<T>,
    corners: &CornerSet<T>,
) -> Result<T> {
    Ok(nre_report(extrinsic, cam, corners, NreOptions::default())?.nre)
}

pub fn nre_report<T: Real>(
    extrinsic: &RigidTransform<T>,
    cam: &CameraModel<T>,
    corners: &CornerSet<T>,
    opts: NreOptions,
) -> Result<NreReport<T>> {
    if corners.corners3d.is_empty() || corners.corners2d.is_empty() {
        return Err(Error::EmptyCornerSet);
    }
    let max_range = corners
        .corners3d
        .iter()
        .fold(T::zero(), |m, p| m.max(p.norm()));
    let mut out = Vec::with_capacity(corners.corners3d.len());
    for c in &corners.corners3d {
        let p_cam = extrinsic.transform_point(c);
        let projected = if opts.pinhole_only {
            cam.project_pinhole(&p_cam)?
        } else {
            cam.project(&p_cam)?
        };
        let mut matched = 0;
        let mut best = projected.distance(&corners.corners2d[0]);
        for (k, d) in corners.corners2d.iter().enumerate().skip(1) {
            let dist = projected.distance(d);
            if dist < best {
                best = dist;
                matched = k;
            }
        }
        let range = c.norm();
        let factor = if max_range > T::zero() {
            range / max_range
        } else {
            T::zero()
        };
        out.push(CornerError {
            projected,
            matched,
            pixel_error: best,
            range,
            factor,
        });
    }
    let total = out
        .iter()
        .fold(T::zero(), |acc, e| acc + e.factor * e.pixel_error);
    Ok(NreReport {
        nre: total / T::lit(out.len() as f64),
        corners: out,
    })
}
