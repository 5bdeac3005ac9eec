//! Final refinement: LM on the contribution-weighted cost, with the weights
//! re-estimated from the current pose at the start of every outer round.

use serde::{Deserialize, Serialize};

use crate::contribution;
use crate::error::{Error, Result};
use crate::features::{FeatureSet, FeatureWeights};
use crate::geometry::{CameraModel, RigidTransform};
use crate::scalar::Real;
use crate::solver::{self, LmConfig};
use crate::system::{self, LinearSystem};

/// Outer rounds stop once no weight moves by more than this.
pub const WEIGHT_CHANGE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub max_outer_rounds: usize,
    pub max_inner_iters: usize,
    pub step_tol: f64,
    /// Stop early once the rms residual falls below this, pixels.
    pub residual_tol: f64,
    pub use_weights: bool,
    /// Huber threshold on line rows, pixels.
    pub huber_delta_px: Option<f64>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_outer_rounds: 3,
            max_inner_iters: 50,
            step_tol: 1e-8,
            residual_tol: 1e-10,
            use_weights: true,
            huber_delta_px: None,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_rounds < 1 || self.max_inner_iters < 1 {
            return Err(Error::InvalidConfig("refine rounds and iterations must be >= 1".into()));
        }
        if !(self.step_tol > 0.0) || !(self.residual_tol > 0.0) {
            return Err(Error::InvalidConfig("refine tolerances must be > 0".into()));
        }
        if self.huber_delta_px.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::InvalidConfig("refine.huber_delta_px must be > 0".into()));
        }
        Ok(())
    }

    fn lm<T: Real>(&self) -> LmConfig<T> {
        LmConfig {
            max_iterations: self.max_inner_iters,
            step_tol: T::lit(self.step_tol),
            line_huber_delta: self.huber_delta_px.map(T::lit),
            ..LmConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats<T: Real> {
    /// Unweighted rms over the rows with positive weight.
    pub rms_px: T,
    pub n_active_features: usize,
    pub step_norm: T,
    /// Weighted cost at the end of the round.
    pub cost: T,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult<T: Real> {
    pub transform: RigidTransform<T>,
    pub weights: FeatureWeights<T>,
    pub per_round: Vec<RoundStats<T>>,
    /// `σ_max / σ_min` of the rotational and translational Hessian blocks at
    /// the final pose.
    pub condition_numbers: (T, T),
    pub uniform_weighting: bool,
}

/// Linearization restricted to units with positive weight.
pub fn weighted_residuals<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
    weights: &FeatureWeights<T>,
) -> Result<LinearSystem<T>> {
    if weights.flatten().iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
        return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
    }
    let sys = system::linearize(pose, cam, features, weights, false)?;
    if sys.residuals.is_empty() {
        return Err(Error::EmptySystem);
    }
    Ok(sys)
}

fn round_weights<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
    use_weights: bool,
) -> Result<FeatureWeights<T>> {
    if use_weights {
        let (_, report) = contribution::analyze(pose, cam, features)?;
        Ok(report.weights(features))
    } else {
        Ok(FeatureWeights::uniform(features))
    }
}

fn weighted_cost<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
    weights: &FeatureWeights<T>,
) -> Option<T> {
    system::linearize(pose, cam, features, weights, true)
        .ok()
        .map(|s| s.cost())
        .filter(|c| c.is_finite())
}

pub fn refine<T: Real>(
    initial: &RigidTransform<T>,
    features: &FeatureSet<T>,
    cam: &CameraModel<T>,
    cfg: &RefineConfig,
) -> Result<CalibrationResult<T>> {
    cfg.validate()?;
    features.check_solvable()?;
    let lm_cfg = cfg.lm();
    let mut pose = *initial;
    let mut weights = round_weights(&pose, cam, features, cfg.use_weights)?;
    let mut iterates = vec![pose];
    let mut per_round = Vec::new();
    for round in 0..cfg.max_outer_rounds {
        if round > 0 {
            let next = round_weights(&pose, cam, features, cfg.use_weights)?;
            let change = next.max_abs_diff(&weights);
            weights = next;
            if change < T::lit(WEIGHT_CHANGE_TOL) {
                break;
            }
        }
        let report = solver::solve(&pose, cam, features, &weights, &lm_cfg)?;
        let start = report.costs[0];
        let end = report.final_cost();
        if !end.is_finite() || end > start {
            return Err(Error::Diverged(format!(
                "cost rose from {:e} to {:e} in round {round}",
                start.as_f64(),
                end.as_f64()
            )));
        }
        pose = report.pose;
        iterates.push(pose);
        let sys = system::linearize(&pose, cam, features, &weights, true)?;
        let n_active = features
            .units()
            .filter(|&u| weights.get(u) > T::zero() && !report.excluded.contains(&u))
            .count();
        per_round.push(RoundStats {
            rms_px: sys.rms(),
            n_active_features: n_active,
            step_norm: report.last_step_norm(),
            cost: end,
            inner_iterations: report.iterations,
        });
        if !cfg.use_weights || sys.rms() < T::lit(cfg.residual_tol) {
            break;
        }
    }

    // Rounds optimize different weightings; pick the iterate that is best
    // under the last one.
    let mut best = pose;
    let mut best_cost = weighted_cost(&pose, cam, features, &weights);
    for it in iterates.iter().rev() {
        if let Some(c) = weighted_cost(it, cam, features, &weights) {
            if best_cost.is_none_or(|b| c < b) {
                best = *it;
                best_cost = Some(c);
            }
        }
    }

    let (eig, _) = contribution::analyze(&best, cam, features)?;
    Ok(CalibrationResult {
        transform: best,
        weights,
        per_round,
        condition_numbers: eig.condition_numbers(),
        uniform_weighting: !cfg.use_weights,
    })
}
