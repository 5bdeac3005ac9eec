//! Levenberg-Marquardt on the weighted normal equations over SE(3).

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::features::{FeatureRef, FeatureSet, FeatureWeights};
use crate::geometry::{CameraModel, RigidTransform, TangentVector};
use crate::linalg::symmetric_eigen;
use crate::scalar::Real;
use crate::system::{self, LinearSystem};

/// Relative eigenvalue floor of the column-scaled `JᵀWJ` below which the
/// system is declared rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig<T: Real> {
    pub max_iterations: usize,
    /// Converged once an accepted step has tangent norm below this.
    pub step_tol: T,
    pub initial_damping: T,
    /// Huber threshold on line rows, pixels. `None` is plain least squares.
    pub line_huber_delta: Option<T>,
}

impl<T: Real> Default for LmConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tol: T::lit(1e-8),
            initial_damping: T::lit(1e-4),
            line_huber_delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport<T: Real> {
    pub pose: RigidTransform<T>,
    /// Robust weighted cost at each accepted iterate, starting with the initial pose.
    pub costs: Vec<T>,
    /// Norm of every computed step, accepted or not.
    pub step_norms: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Units with positive weight that were behind the camera at the start.
    pub excluded: Vec<FeatureRef>,
}

impl<T: Real> LmReport<T> {
    pub fn final_cost(&self) -> T {
        *self.costs.last().expect("costs always holds the initial cost")
    }

    pub fn last_step_norm(&self) -> T {
        self.step_norms.last().copied().unwrap_or_else(T::zero)
    }
}

/// `ρ(r)` and IRLS factor `ρ'(r)/r` for a row.
fn robust<T: Real>(r: T, delta: Option<T>) -> (T, T) {
    let half = T::lit(0.5);
    match delta {
        Some(d) if r.abs() > d => (d * (r.abs() - d * half), d / r.abs()),
        _ => (half * r * r, T::one()),
    }
}

struct Problem<'a, T: Real> {
    cam: &'a CameraModel<T>,
    features: &'a FeatureSet<T>,
    weights: FeatureWeights<T>,
    delta: Option<T>,
}

impl<T: Real> Problem<'_, T> {
    fn cost(&self, pose: &RigidTransform<T>) -> Result<T> {
        let rows = system::residuals(pose, self.cam, self.features, &self.weights)?;
        let mut total = T::zero();
        for (unit, r) in rows {
            let w = self.weights.get(unit);
            match unit {
                FeatureRef::Point(_) => total += w * (robust(r[0], None).0 + robust(r[1], None).0),
                FeatureRef::LineSample { .. } => total += w * robust(r[0], self.delta).0,
            }
        }
        Ok(total)
    }

    fn normal_equations(&self, sys: &LinearSystem<T>) -> (Matrix6<T>, Vector6<T>, T) {
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        let mut cost = T::zero();
        for i in 0..sys.residuals.len() {
            let r = sys.residuals[i];
            let is_line = sys.jacobian.sources[i].kind.is_line();
            let (rho, irls) = robust(r, if is_line { self.delta } else { None });
            let w = sys.weights[i];
            let j = sys.jacobian.row(i).transpose();
            h += j * j.transpose() * (w * irls);
            g += j * (w * irls * r);
            cost += w * rho;
        }
        (h, g, cost)
    }
}

/// Fails when `h` does not constrain all six directions.
pub fn check_rank<T: Real>(h: &Matrix6<T>) -> Result<()> {
    let diag = h.diagonal();
    if let Some(k) = diag.iter().position(|&d| !(d > T::zero())) {
        return Err(Error::SingularNormalEquations(format!(
            "parameter {k} is unconstrained (zero column)"
        )));
    }
    let s = diag.map(|d| T::one() / d.sqrt());
    let scaled = Matrix6::from_fn(|i, j| h[(i, j)] * s[i] * s[j]);
    let eig = symmetric_eigen(&scaled);
    if eig.values[5] <= T::lit(RANK_TOLERANCE) * eig.values[0] {
        return Err(Error::SingularNormalEquations(format!(
            "scaled Hessian eigenvalue ratio {:e}",
            (eig.values[5] / eig.values[0]).as_f64()
        )));
    }
    Ok(())
}

/// Minimize `Σ wᵢ ρ(eᵢ)` starting from `initial`.
///
/// Units with zero weight are left out of the system entirely. Units behind
/// the camera at the initial pose are excluded for the whole solve; a trial
/// step that pushes a remaining unit behind the camera is rejected.
pub fn solve<T: Real>(
    initial: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
    weights: &FeatureWeights<T>,
    cfg: &LmConfig<T>,
) -> Result<LmReport<T>> {
    if !weights.matches_shape(features) {
        return Err(Error::InvalidConfig(
            "weight vector does not match the feature set".into(),
        ));
    }
    if weights.flatten().iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
    }
    let first = system::linearize(initial, cam, features, weights, true)?;
    let mut active = weights.clone();
    for &u in &first.jacobian.excluded {
        active.set(u, T::zero());
    }
    if first.residuals.is_empty() {
        return Err(if first.jacobian.excluded.is_empty() {
            Error::EmptySystem
        } else {
            Error::EmptyJacobian
        });
    }
    let problem = Problem {
        cam,
        features,
        weights: active,
        delta: cfg.line_huber_delta,
    };

    let mut pose = *initial;
    let (h0, _, cost0) = problem.normal_equations(&first);
    check_rank(&h0)?;
    let mut report = LmReport {
        pose,
        costs: vec![cost0],
        step_norms: Vec::new(),
        iterations: 0,
        converged: false,
        excluded: first.jacobian.excluded.clone(),
    };
    if !cost0.is_finite() {
        return Err(Error::Diverged("initial cost is not finite".into()));
    }
    let mut lambda = cfg.initial_damping;
    let mut sys = first;
    let ten = T::lit(10.0);
    'outer: for _ in 0..cfg.max_iterations {
        report.iterations += 1;
        let (h, g, cost) = problem.normal_equations(&sys);
        if cost == T::zero() {
            report.converged = true;
            break;
        }
        loop {
            let mut damped = h;
            for k in 0..6 {
                damped[(k, k)] += lambda * h[(k, k)];
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= ten;
                if lambda > T::lit(MAX_DAMPING) {
                    return Err(Error::SingularNormalEquations(
                        "damped normal equations are not positive definite".into(),
                    ));
                }
                continue;
            };
            let step = -chol.solve(&g);
            let step_norm = step.norm();
            report.step_norms.push(step_norm);
            let candidate = pose.perturbed(&TangentVector::from_rot_trans(&step));
            let trial = problem.cost(&candidate).ok().filter(|c| c.is_finite());
            let small = step_norm < cfg.step_tol;
            match trial {
                Some(c) if c <= cost => {
                    pose = candidate;
                    report.costs.push(c);
                    lambda = (lambda / ten).max(T::lit(1e-12));
                    if small {
                        report.converged = true;
                        break 'outer;
                    }
                    sys = system::linearize(&pose, cam, features, &problem.weights, false)?;
                    break;
                }
                _ => {
                    if small {
                        // At the numerical floor: nothing left to gain.
                        report.converged = true;
                        break 'outer;
                    }
                    lambda *= ten;
                    if lambda > T::lit(MAX_DAMPING) {
                        report.converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    report.pose = pose;
    Ok(report)
}
