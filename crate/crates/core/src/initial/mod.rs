//! Rough initial extrinsic from correspondences alone: RANSAC-PnP on the
//! point features followed by a joint point + line refinement.

pub mod p3p;
mod ransac;

pub use ransac::ransac_pnp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, FeatureWeights, LineCorrespondence};
use crate::geometry::{CameraModel, RigidTransform};
use crate::scalar::Real;
use crate::solver::{self, LmConfig};
use crate::system;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub max_iterations: usize,
    pub inlier_threshold_px: f64,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            inlier_threshold_px: 2.0,
            confidence: 0.999,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("ransac.max_iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold_px > 0.0) {
            return Err(Error::InvalidConfig("ransac.inlier_threshold_px must be > 0".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig("ransac.confidence must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialEstimate<T: Real> {
    pub transform: RigidTransform<T>,
    pub inlier_point_indices: Vec<usize>,
    pub inlier_line_indices: Vec<usize>,
    pub rms_residual_px: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointRefineConfig {
    /// Point inlier threshold, pixels.
    pub inlier_threshold_px: f64,
    /// A line is kept when the median |residual| of its samples is below
    /// this multiple of the point threshold.
    pub line_gate_factor: f64,
    /// Huber threshold on line rows; `None` reproduces the plain squared cost.
    pub huber_delta_px: Option<f64>,
    pub max_iterations: usize,
    pub step_tol: f64,
    /// Re-gating rounds.
    pub max_rounds: usize,
}

impl Default for JointRefineConfig {
    fn default() -> Self {
        Self {
            inlier_threshold_px: 2.0,
            line_gate_factor: 3.0,
            huber_delta_px: Some(2.0),
            max_iterations: 50,
            step_tol: 1e-8,
            max_rounds: 3,
        }
    }
}

/// Signed pixel distance `nᵀ(f(π(T·P)) − q)` of one line sample.
pub fn point_to_line_residual<T: Real>(
    transform: &RigidTransform<T>,
    cam: &CameraModel<T>,
    line: &LineCorrespondence<T>,
    sample_index: usize,
) -> Result<T> {
    line.residual(transform, cam, sample_index)
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    }
}

fn gate<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
    cfg: &JointRefineConfig,
) -> (Vec<usize>, Vec<usize>) {
    let thr = T::lit(cfg.inlier_threshold_px);
    let points = features
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.residual(pose, cam).is_ok_and(|r| r.norm() < thr))
        .map(|(i, _)| i)
        .collect();
    let line_thr = thr * T::lit(cfg.line_gate_factor);
    let lines = features
        .lines
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            let res: Result<Vec<T>> = (0..l.points3d().len())
                .map(|s| l.residual(pose, cam, s).map(|r| r.abs()))
                .collect();
            res.is_ok_and(|r| median(r) < line_thr)
        })
        .map(|(j, _)| j)
        .collect();
    (points, lines)
}

/// Jointly refine the initial pose on inlier points and gated lines.
pub fn joint_refine<T: Real>(
    initial: &InitialEstimate<T>,
    features: &FeatureSet<T>,
    cam: &CameraModel<T>,
    cfg: &JointRefineConfig,
) -> Result<InitialEstimate<T>> {
    if features.is_empty() {
        return Err(Error::Geometry("joint refinement needs at least one feature".into()));
    }
    let lm = LmConfig {
        max_iterations: cfg.max_iterations,
        step_tol: T::lit(cfg.step_tol),
        initial_damping: T::lit(1e-4),
        line_huber_delta: cfg.huber_delta_px.map(T::lit),
    };
    let mut pose = initial.transform;
    let (_, mut lines) = gate(&pose, cam, features, cfg);
    let mut points = initial.inlier_point_indices.clone();
    for _ in 0..cfg.max_rounds.max(1) {
        if points.is_empty() && lines.is_empty() {
            return Err(Error::NoConsensus { inliers: 0 });
        }
        let weights = FeatureWeights::selection(features, &points, &lines);
        pose = solver::solve(&pose, cam, features, &weights, &lm)?.pose;
        let (p, l) = gate(&pose, cam, features, cfg);
        let changed = p != points || l != lines;
        points = p;
        lines = l;
        if !changed {
            break;
        }
    }
    let weights = FeatureWeights::selection(features, &points, &lines);
    let sys = system::linearize(&pose, cam, features, &weights, true)?;
    Ok(InitialEstimate {
        transform: pose,
        inlier_point_indices: points,
        inlier_line_indices: lines,
        rms_residual_px: sys.rms(),
    })
}
