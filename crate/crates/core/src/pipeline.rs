//! Initial guess, joint refinement and weighted refinement chained together.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{FeatureSet, FeatureWeights};
use crate::geometry::CameraModel;
use crate::initial::{joint_refine, ransac_pnp, InitialEstimate, JointRefineConfig, RansacConfig};
use crate::refine::{refine, CalibrationResult, RefineConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ransac: RansacConfig,
    pub joint: JointRefineConfig,
    pub refine: RefineConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.ransac.validate()?;
        self.refine.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T: Real> {
    pub ransac: InitialEstimate<T>,
    pub joint: InitialEstimate<T>,
    /// Refinement over the inliers of `joint`; `result.weights` is expanded
    /// to the full feature set with 0 for rejected features.
    pub result: CalibrationResult<T>,
}

/// RANSAC-PnP followed by joint point + line refinement.
pub fn initialize<T: Real>(
    features: &FeatureSet<T>,
    cam: &CameraModel<T>,
    cfg: &PipelineConfig,
) -> Result<(InitialEstimate<T>, InitialEstimate<T>)> {
    let ransac = ransac_pnp(features, cam, &cfg.ransac)?;
    let joint = joint_refine(&ransac, features, cam, &cfg.joint)?;
    Ok((ransac, joint))
}

/// Features selected by index.
pub fn subset<T: Real>(features: &FeatureSet<T>, points: &[usize], lines: &[usize]) -> FeatureSet<T> {
    FeatureSet::new(
        points.iter().map(|&i| features.points[i].clone()).collect(),
        lines.iter().map(|&j| features.lines[j].clone()).collect(),
    )
}

pub fn calibrate<T: Real>(
    features: &FeatureSet<T>,
    cam: &CameraModel<T>,
    cfg: &PipelineConfig,
) -> Result<Calibration<T>> {
    cfg.validate()?;
    let (ransac, joint) = initialize(features, cam, cfg)?;
    let inliers = subset(features, &joint.inlier_point_indices, &joint.inlier_line_indices);
    let mut result = refine(&joint.transform, &inliers, cam, &cfg.refine)?;
    let mut full = FeatureWeights::constant(features, T::zero());
    for (k, &i) in joint.inlier_point_indices.iter().enumerate() {
        full.points[i] = result.weights.points[k];
    }
    for (k, &j) in joint.inlier_line_indices.iter().enumerate() {
        full.lines[j].clone_from(&result.weights.lines[k]);
    }
    result.weights = full;
    Ok(Calibration { ransac, joint, result })
}
