use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{p3p, InitialEstimate, RansacConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureSet, FeatureWeights};
use crate::geometry::{CameraModel, RigidTransform};
use crate::scalar::Real;
use crate::solver::{self, LmConfig};

const SAMPLE_SIZE: usize = 4;
const MAX_REFINE_ROUNDS: usize = 3;

/// Canonical processing order: correspondences sorted by their values, so
/// the outcome does not depend on input order.
fn canonical_order<T: Real>(features: &FeatureSet<T>) -> Vec<usize> {
    let key = |i: usize| {
        let p = &features.points[i];
        [
            p.point3d.x.as_f64(),
            p.point3d.y.as_f64(),
            p.point3d.z.as_f64(),
            p.pixel.u.as_f64(),
            p.pixel.v.as_f64(),
        ]
    };
    let mut order: Vec<usize> = (0..features.points.len()).collect();
    order.sort_by(|&a, &b| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Inlier indices and rms over their rows.
fn score<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
    threshold: T,
) -> (Vec<usize>, T) {
    let mut inliers = Vec::new();
    let mut sq = T::zero();
    for (i, p) in features.points.iter().enumerate() {
        if let Ok(r) = p.residual(pose, cam) {
            let e2 = r.norm_squared();
            if e2.sqrt() < threshold {
                inliers.push(i);
                sq += e2;
            }
        }
    }
    let rms = if inliers.is_empty() {
        T::zero()
    } else {
        (sq / T::lit((2 * inliers.len()) as f64)).sqrt()
    };
    (inliers, rms)
}

fn is_degenerate<T: Real>(pts: &[Vector3<T>; 3]) -> bool {
    let a = pts[1] - pts[0];
    let b = pts[2] - pts[0];
    let scale = a.norm_squared().max(b.norm_squared());
    scale == T::zero() || a.cross(&b).norm_squared() <= T::lit(1e-12) * scale * scale
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let good = inlier_ratio.powi(SAMPLE_SIZE as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return cap;
    }
    let n = ((1.0 - confidence).ln() / (1.0 - good).ln()).ceil();
    if n.is_finite() && n >= 1.0 {
        (n as usize).min(cap)
    } else {
        cap
    }
}

pub fn ransac_pnp<T: Real>(
    features: &FeatureSet<T>,
    cam: &CameraModel<T>,
    cfg: &RansacConfig,
) -> Result<InitialEstimate<T>> {
    cfg.validate()?;
    let n = features.points.len();
    if n < SAMPLE_SIZE {
        return Err(Error::InsufficientPoints {
            required: SAMPLE_SIZE,
            got: n,
        });
    }
    let order = canonical_order(features);
    let canon = FeatureSet::new(
        order.iter().map(|&i| features.points[i].clone()).collect(),
        Vec::new(),
    );
    let bearings: Vec<Vector3<T>> = canon.points.iter().map(|p| cam.bearing(&p.pixel)).collect();
    let threshold = T::lit(cfg.inlier_threshold_px);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, T, RigidTransform<T>)> = None;
    let mut required = cfg.max_iterations;
    let mut iteration = 0;
    while iteration < required {
        iteration += 1;
        let sample = rand::seq::index::sample(&mut rng, n, SAMPLE_SIZE).into_vec();
        let world = [0, 1, 2].map(|k| canon.points[sample[k]].point3d);
        if is_degenerate(&world) {
            continue;
        }
        let rays = [0, 1, 2].map(|k| bearings[sample[k]]);
        let check = &canon.points[sample[3]];
        let hypothesis = p3p::solve(&world, &rays)
            .into_iter()
            .filter_map(|pose| {
                let e = check.residual(&pose, cam).ok()?.norm();
                e.is_finite().then_some((e, pose))
            })
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let Some((_, pose)) = hypothesis else {
            continue;
        };
        let (inliers, rms) = score(&pose, cam, &canon, threshold);
        let better = match &best {
            None => true,
            Some((count, best_rms, _)) => {
                inliers.len() > *count || (inliers.len() == *count && rms < *best_rms)
            }
        };
        if better {
            let ratio = inliers.len() as f64 / n as f64;
            required = required_iterations(ratio, cfg.confidence, cfg.max_iterations).max(iteration);
            best = Some((inliers.len(), rms, pose));
        }
    }

    let Some((count, _, mut pose)) = best else {
        return Err(Error::DegenerateConfiguration);
    };
    if count < SAMPLE_SIZE {
        return Err(Error::NoConsensus { inliers: count });
    }

    let lm = LmConfig::default();
    let (mut inliers, mut rms) = score(&pose, cam, &canon, threshold);
    for _ in 0..MAX_REFINE_ROUNDS {
        let weights = FeatureWeights::selection(&canon, &inliers, &[]);
        pose = solver::solve(&pose, cam, &canon, &weights, &lm)?.pose;
        let (next, next_rms) = score(&pose, cam, &canon, threshold);
        let changed = next != inliers;
        inliers = next;
        rms = next_rms;
        if !changed {
            break;
        }
    }
    if inliers.len() < SAMPLE_SIZE {
        return Err(Error::NoConsensus {
            inliers: inliers.len(),
        });
    }
    let mut original: Vec<usize> = inliers.iter().map(|&k| order[k]).collect();
    original.sort_unstable();
    Ok(InitialEstimate {
        transform: pose,
        inlier_point_indices: original,
        inlier_line_indices: Vec::new(),
        rms_residual_px: rms,
    })
}
