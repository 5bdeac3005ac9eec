//! Residual and Jacobian assembly shared by the solvers and the
//! contribution analysis.

use nalgebra::{DVector, Dyn, Matrix6, OMatrix, RowVector6, Vector6, U6};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureRef, FeatureSet, FeatureWeights};
use crate::geometry::{CameraModel, Pixel, RigidTransform};
use crate::scalar::Real;

/// Where a Jacobian row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowSource {
    pub feature: FeatureRef,
    pub kind: FeatureKind,
    /// 0 for the u-row of a point (and for line samples), 1 for the v-row.
    pub component: u8,
}

/// Jacobian of all residual rows with respect to the `[rot | trans]`
/// perturbation, pixel units per tangent unit.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedJacobian<T: Real> {
    pub rows: OMatrix<T, Dyn, U6>,
    pub sources: Vec<RowSource>,
    /// Image location of each unit in `units` order: the observed pixel for
    /// points, the foot of the projected sample on the 2D line for lines.
    pub locations: Vec<(FeatureRef, Pixel<T>)>,
    /// Units skipped because they project behind the camera.
    pub excluded: Vec<FeatureRef>,
}

impl<T: Real> StackedJacobian<T> {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn row(&self, i: usize) -> RowVector6<T> {
        self.rows.row(i).into_owned()
    }

    /// Gauss-Newton Hessian `JᵀJ`.
    pub fn hessian(&self) -> Matrix6<T> {
        let mut h = Matrix6::zeros();
        for i in 0..self.n_rows() {
            let r = self.row(i);
            h += r.transpose() * r;
        }
        h
    }
}

/// Weighted linearization at one pose; rows with zero weight are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T: Real> {
    pub jacobian: StackedJacobian<T>,
    pub residuals: DVector<T>,
    pub weights: DVector<T>,
}

impl<T: Real> LinearSystem<T> {
    /// `(JᵀWJ, JᵀWe)`.
    pub fn normal_equations(&self) -> (Matrix6<T>, Vector6<T>) {
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for i in 0..self.residuals.len() {
            let j = self.jacobian.row(i).transpose();
            let w = self.weights[i];
            h += j * j.transpose() * w;
            g += j * (w * self.residuals[i]);
        }
        (h, g)
    }

    /// `½ Σ wᵢ eᵢ²`.
    pub fn cost(&self) -> T {
        self.residuals
            .iter()
            .zip(self.weights.iter())
            .fold(T::zero(), |acc, (&e, &w)| acc + w * e * e)
            * T::lit(0.5)
    }

    /// Unweighted root-mean-square residual over the present rows.
    pub fn rms(&self) -> T {
        let n = self.residuals.len();
        if n == 0 {
            return T::zero();
        }
        (self.residuals.norm_squared() / T::lit(n as f64)).sqrt()
    }
}

/// Residuals of every unit with positive weight, without Jacobians.
///
/// Returns `(unit, row residuals)`; used by the solver's trial steps.
pub(crate) fn residuals<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
    weights: &FeatureWeights<T>,
) -> Result<Vec<(FeatureRef, [T; 2])>> {
    let mut out = Vec::new();
    for unit in features.units() {
        if weights.get(unit) <= T::zero() {
            continue;
        }
        match unit {
            FeatureRef::Point(i) => {
                let r = features.points[i].residual(pose, cam)?;
                out.push((unit, [r.x, r.y]));
            }
            FeatureRef::LineSample { line, sample } => {
                let r = features.lines[line].residual(pose, cam, sample)?;
                out.push((unit, [r, T::zero()]));
            }
        }
    }
    Ok(out)
}

/// Linearize the residuals of every unit with positive weight.
///
/// With `skip_hidden`, units behind the camera are listed in
/// `jacobian.excluded`; otherwise they are an error.
pub fn linearize<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
    weights: &FeatureWeights<T>,
    skip_hidden: bool,
) -> Result<LinearSystem<T>> {
    if !weights.matches_shape(features) {
        return Err(Error::InvalidConfig(
            "weight vector does not match the feature set".into(),
        ));
    }
    let mut rows: Vec<RowVector6<T>> = Vec::new();
    let mut sources = Vec::new();
    let mut res = Vec::new();
    let mut w = Vec::new();
    let mut locations = Vec::new();
    let mut excluded = Vec::new();
    for unit in features.units() {
        let weight = weights.get(unit);
        if weight <= T::zero() {
            continue;
        }
        let kind = features.kind_of(unit);
        let p3 = match unit {
            FeatureRef::Point(i) => features.points[i].point3d,
            FeatureRef::LineSample { line, sample } => features.lines[line].points3d()[sample],
        };
        let p_cam = pose.transform_point(&p3);
        let (px, phi) = match cam.project(&p_cam).and_then(|px| Ok((px, cam.reprojection_jacobian(&p_cam)?))) {
            Ok(v) => v,
            Err(e @ Error::PointBehindCamera { .. }) => {
                if skip_hidden {
                    excluded.push(unit);
                    continue;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        match unit {
            FeatureRef::Point(i) => {
                let obs = features.points[i].pixel;
                for c in 0..2u8 {
                    rows.push(phi.row(c as usize).into_owned());
                    sources.push(RowSource { feature: unit, kind, component: c });
                    w.push(weight);
                }
                res.push(px.u - obs.u);
                res.push(px.v - obs.v);
                locations.push((unit, obs));
            }
            FeatureRef::LineSample { line, .. } => {
                let l = &features.lines[line];
                let n = l.normal();
                rows.push(phi.row(0) * n.x + phi.row(1) * n.y);
                sources.push(RowSource { feature: unit, kind, component: 0 });
                w.push(weight);
                res.push(l.distance(&px));
                locations.push((unit, l.foot(&px)));
            }
        }
    }
    Ok(LinearSystem {
        jacobian: StackedJacobian {
            rows: OMatrix::<T, Dyn, U6>::from_fn(rows.len(), |i, j| rows[i][j]),
            sources,
            locations,
            excluded,
        },
        residuals: DVector::from_vec(res),
        weights: DVector::from_vec(w),
    })
}
