use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Below this rotation angle the exp/log maps switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric matrix `[v]x` such that `[v]x · w = v × w`.
pub fn hat<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// Inverse of [`hat`]; reads the skew part of `m`.
pub fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Element of the tangent space se(3).
///
/// `rho` is the translational part (meters), `phi` the rotation vector
/// (radians). Solvers stack it as `[phi, rho]` to match the
/// `[rotation | translation]` Jacobian column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector<T: Real> {
    pub rho: Vector3<T>,
    pub phi: Vector3<T>,
}

impl<T: Real> TangentVector<T> {
    pub fn new(rho: Vector3<T>, phi: Vector3<T>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    /// Build from a solver step laid out as `[phi, rho]`.
    pub fn from_rot_trans(v: &Vector6<T>) -> Self {
        Self::new(
            Vector3::new(v[3], v[4], v[5]),
            Vector3::new(v[0], v[1], v[2]),
        )
    }

    /// Stack as `[phi, rho]`.
    pub fn to_rot_trans(&self) -> Vector6<T> {
        Vector6::new(
            self.phi.x, self.phi.y, self.phi.z, self.rho.x, self.rho.y, self.rho.z,
        )
    }

    pub fn norm(&self) -> T {
        (self.rho.norm_squared() + self.phi.norm_squared()).sqrt()
    }
}

/// Rigid transform `p ↦ R·p + t`.
///
/// In calibration use it maps LiDAR-frame points into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build from parts, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        let tol = T::lit(1e-6);
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > tol || (rotation.determinant() - T::one()).abs() > tol {
            return Err(Error::Geometry(
                "rotation block is not orthonormal with determinant +1".into(),
            ));
        }
        if !rotation.iter().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::Geometry("transform has non-finite entries".into()));
        }
        Ok(Self::from_parts_unchecked(rotation, translation))
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about `axis_angle` (Rodrigues vector) followed by `translation`.
    pub fn from_axis_angle(axis_angle: Vector3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation: so3_exp(&axis_angle),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Solver update: the perturbation acts on camera-frame points,
    /// `p_cam ↦ exp(xi)·p_cam`.
    pub fn perturbed(&self, xi: &TangentVector<T>) -> Self {
        Self::exp(xi).compose(self)
    }

    pub fn exp(xi: &TangentVector<T>) -> Self {
        let (a, b, c) = exp_coefficients(&xi.phi);
        let phi_hat = hat(&xi.phi);
        let phi_hat2 = phi_hat * phi_hat;
        let id = Matrix3::identity();
        let rotation = id + phi_hat * a + phi_hat2 * b;
        let v = id + phi_hat * b + phi_hat2 * c;
        Self {
            rotation,
            translation: v * xi.rho,
        }
    }

    pub fn log(&self) -> TangentVector<T> {
        let phi = so3_log(&self.rotation);
        let theta2 = phi.norm_squared();
        let theta = theta2.sqrt();
        let phi_hat = hat(&phi);
        let half = T::lit(0.5);
        let d = if theta < T::lit(SMALL_ANGLE) {
            T::lit(1.0 / 12.0) + theta2 / T::lit(720.0)
        } else {
            let (a, b, _) = exp_coefficients(&phi);
            (T::one() - a / (b * T::lit(2.0))) / theta2
        };
        let v_inv = Matrix3::identity() - phi_hat * half + phi_hat * phi_hat * d;
        TangentVector::new(v_inv * self.translation, phi)
    }

    /// 4×4 homogeneous matrix.
    pub fn to_matrix(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<T>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)] - T::one()];
        if bottom.iter().any(|x| x.abs() > T::lit(1e-9)) {
            return Err(Error::Geometry(
                "last row of a homogeneous transform must be [0 0 0 1]".into(),
            ));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Rotation angle of `self⁻¹ ∘ other`, radians.
    pub fn rotation_error(&self, other: &Self) -> T {
        so3_log(&(self.rotation.transpose() * other.rotation)).norm()
    }

    /// Euclidean distance between the translation parts, meters.
    pub fn translation_error(&self, other: &Self) -> T {
        (self.translation - other.translation).norm()
    }

    /// Convert the scalar type.
    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.map(|x| U::lit(x.as_f64())),
            translation: self.translation.map(|x| U::lit(x.as_f64())),
        }
    }
}

/// `(sinθ/θ, (1−cosθ)/θ², (θ−sinθ)/θ³)` with Taylor fallbacks near zero.
fn exp_coefficients<T: Real>(phi: &Vector3<T>) -> (T, T, T) {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    if theta < T::lit(SMALL_ANGLE) {
        (
            T::one() - theta2 / T::lit(6.0),
            T::lit(0.5) - theta2 / T::lit(24.0),
            T::lit(1.0 / 6.0) - theta2 / T::lit(120.0),
        )
    } else {
        let (s, c) = theta.sin_cos();
        (
            s / theta,
            (T::one() - c) / theta2,
            (theta - s) / (theta2 * theta),
        )
    }
}

pub(crate) fn so3_exp<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let (a, b, _) = exp_coefficients(phi);
    let h = hat(phi);
    Matrix3::identity() + h * a + h * h * b
}

pub(crate) fn so3_log<T: Real>(r: &Matrix3<T>) -> Vector3<T> {
    let half = T::lit(0.5);
    let skew = vee(&(r - r.transpose())) * half;
    let cos = ((r.trace() - T::one()) * half).clamp(-T::one(), T::one());
    let sin = skew.norm();
    let theta = sin.atan2(cos);
    if theta < T::lit(SMALL_ANGLE) {
        return skew * (T::one() + theta * theta / T::lit(6.0));
    }
    if cos >= T::zero() {
        return skew * (theta / sin);
    }
    // Near π the skew part vanishes; recover the axis from the symmetric part
    // S = cI + (1 − c)·aaᵀ.
    let sym = (r + r.transpose()) * half;
    let outer = (sym - Matrix3::identity() * cos) / (T::one() - cos);
    let mut k = 0;
    for i in 1..3 {
        if outer[(i, i)] > outer[(k, k)] {
            k = i;
        }
    }
    let mut axis: Vector3<T> = outer.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&skew) < T::zero() {
        axis = -axis;
    }
    axis * theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Independent matrix exponential of the 4×4 twist by scaling and squaring.
    fn expm_oracle(xi: &TangentVector<f64>) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&xi.phi));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.rho);
        let norm = m.abs().max();
        let mut squarings = 0;
        while norm / f64::from(1u32 << squarings) > 0.1 {
            squarings += 1;
        }
        let scaled = m / f64::from(1u32 << squarings);
        let mut sum = Matrix4::identity();
        let mut term = Matrix4::identity();
        for k in 1..30 {
            term = term * scaled / k as f64;
            sum += term;
        }
        for _ in 0..squarings {
            sum = sum * sum;
        }
        sum
    }

    fn random_tangent(rng: &mut ChaCha8Rng, max_angle: f64) -> TangentVector<f64> {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let rho = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        TangentVector::new(rho, axis * rng.random_range(0.0..max_angle))
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let t = RigidTransform::<f64>::exp(&TangentVector::zero());
        assert_eq!(t, RigidTransform::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let xi = TangentVector::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2));
        let t = RigidTransform::exp(&xi);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(*t.rotation(), expected, epsilon = 1e-15);
        assert_relative_eq!(t.translation().norm(), 0.0);
    }

    #[test]
    fn exp_matches_scaling_and_squaring() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let xi = random_tangent(&mut rng, 3.0);
            let closed = RigidTransform::exp(&xi).to_matrix();
            let oracle = expm_oracle(&xi);
            assert_relative_eq!(closed, oracle, epsilon = 1e-10);
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let xi = random_tangent(&mut rng, 3.0);
            let back = RigidTransform::exp(&xi).log();
            let err = (back.to_rot_trans() - xi.to_rot_trans()).norm();
            assert!(err < 1e-8, "round trip error {err} for {xi:?}");
        }
    }

    #[test]
    fn log_near_pi_and_tiny_angles() {
        for angle in [PI - 1e-7, PI - 1e-3, 1e-10, 1e-7, 0.0] {
            let phi = Vector3::new(0.3, -0.4, 0.5).normalize() * angle;
            let xi = TangentVector::new(Vector3::new(1.0, 2.0, 3.0), phi);
            let back = RigidTransform::exp(&xi).log();
            assert_relative_eq!(back.phi, phi, epsilon = 1e-6);
        }
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let t = RigidTransform::exp(&random_tangent(&mut rng, 3.1));
            let id = t.compose(&t.inverse());
            assert!((id.to_matrix() - Matrix4::identity()).amax() < 1e-9);
            let r = t.compose(&t).rotation().to_owned();
            assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let xi = TangentVector::new(
            Vector3::new(0.1f32, 0.2, 0.3),
            Vector3::new(0.4f32, -0.2, 0.1),
        );
        let back = RigidTransform::exp(&xi).log();
        assert_relative_eq!(back.phi, xi.phi, epsilon = 1e-5);
        assert_relative_eq!(back.rho, xi.rho, epsilon = 1e-5);
    }
}
