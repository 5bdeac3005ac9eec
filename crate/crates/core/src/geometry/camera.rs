use nalgebra::{Matrix2, Matrix2x3, Matrix2x6, Matrix3x6, Vector2, Vector3};

use super::se3::hat;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Depth below which a point is treated as behind the camera.
pub(crate) const MIN_DEPTH: f64 = 1e-9;

/// Image coordinates in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pixel<T: Real> {
    pub u: T,
    pub v: T,
}

impl<T: Real> Pixel<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn to_vector(self) -> Vector2<T> {
        Vector2::new(self.u, self.v)
    }

    pub fn from_vector(v: &Vector2<T>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Pinhole camera with 5-coefficient radial-tangential distortion.
///
/// Distortion coefficients are ordered `k1, k2, p1, p2, k3`. All zeros means
/// the images were rectified beforehand and the model is a plain pinhole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub distortion: [T; 5],
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraModel<T> {
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        distortion: [T; 5],
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            distortion,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Undistorted camera, mostly for tests and synthetic scenes.
    pub fn pinhole(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self> {
        Self::new(fx, fy, cx, cy, [T::zero(); 5], width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .chain(self.distortion.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("camera parameters must be finite".into()));
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(Error::InvalidConfig("focal lengths must be positive".into()));
        }
        let w = T::lit(f64::from(self.width));
        let h = T::lit(f64::from(self.height));
        if self.cx < T::zero() || self.cx >= w || self.cy < T::zero() || self.cy >= h {
            return Err(Error::InvalidConfig(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.distortion.iter().any(|k| *k != T::zero())
    }

    /// Same intrinsics with the distortion coefficients zeroed.
    pub fn without_distortion(&self) -> Self {
        Self {
            distortion: [T::zero(); 5],
            ..*self
        }
    }

    /// True when the pixel lies inside `[0, width) × [0, height)`.
    pub fn contains(&self, p: &Pixel<T>) -> bool {
        p.u >= T::zero()
            && p.v >= T::zero()
            && p.u < T::lit(f64::from(self.width))
            && p.v < T::lit(f64::from(self.height))
    }

    /// Radial-tangential distortion of normalized coordinates.
    pub fn distort(&self, xn: &Vector2<T>) -> Vector2<T> {
        let [k1, k2, p1, p2, k3] = self.distortion;
        let (x, y) = (xn.x, xn.y);
        let two = T::lit(2.0);
        let r2 = x * x + y * y;
        let radial = T::one() + r2 * (k1 + r2 * (k2 + r2 * k3));
        Vector2::new(
            x * radial + two * p1 * x * y + p2 * (r2 + two * x * x),
            y * radial + p1 * (r2 + two * y * y) + two * p2 * x * y,
        )
    }

    /// ∂distort/∂xn.
    pub fn distortion_jacobian(&self, xn: &Vector2<T>) -> Matrix2<T> {
        let [k1, k2, p1, p2, k3] = self.distortion;
        let (x, y) = (xn.x, xn.y);
        let two = T::lit(2.0);
        let r2 = x * x + y * y;
        let radial = T::one() + r2 * (k1 + r2 * (k2 + r2 * k3));
        // d(radial)/d(r2)
        let dradial = k1 + r2 * (two * k2 + T::lit(3.0) * r2 * k3);
        let six = T::lit(6.0);
        Matrix2::new(
            radial + two * x * x * dradial + two * p1 * y + six * p2 * x,
            two * x * y * dradial + two * p1 * x + two * p2 * y,
            two * x * y * dradial + two * p1 * x + two * p2 * y,
            radial + two * y * y * dradial + six * p1 * y + two * p2 * x,
        )
    }

    /// Inverse of [`Self::distort`] by Newton iteration.
    pub fn undistort(&self, xd: &Vector2<T>) -> Vector2<T> {
        if !self.has_distortion() {
            return *xd;
        }
        let mut x = *xd;
        for _ in 0..30 {
            let r = self.distort(&x) - xd;
            if r.amax() < T::lit(1e-14) {
                break;
            }
            match self.distortion_jacobian(&x).try_inverse() {
                Some(inv) => x -= inv * r,
                None => break,
            }
        }
        x
    }

    fn check_depth(p_cam: &Vector3<T>) -> Result<()> {
        if p_cam.z <= T::lit(MIN_DEPTH) || !p_cam.z.is_finite() {
            return Err(Error::PointBehindCamera { z: p_cam.z.as_f64() });
        }
        Ok(())
    }

    fn scale_to_pixel(&self, xd: &Vector2<T>) -> Pixel<T> {
        Pixel::new(self.fx * xd.x + self.cx, self.fy * xd.y + self.cy)
    }

    /// Pinhole division, distortion, then pixel scaling.
    pub fn project(&self, p_cam: &Vector3<T>) -> Result<Pixel<T>> {
        Self::check_depth(p_cam)?;
        let xn = Vector2::new(p_cam.x / p_cam.z, p_cam.y / p_cam.z);
        Ok(self.scale_to_pixel(&self.distort(&xn)))
    }

    /// Projection ignoring the distortion coefficients.
    pub fn project_pinhole(&self, p_cam: &Vector3<T>) -> Result<Pixel<T>> {
        Self::check_depth(p_cam)?;
        Ok(Pixel::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Undistorted normalized coordinates of a pixel.
    pub fn normalize(&self, p: &Pixel<T>) -> Vector2<T> {
        let xd = Vector2::new((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy);
        self.undistort(&xd)
    }

    /// Unit bearing vector through a pixel.
    pub fn bearing(&self, p: &Pixel<T>) -> Vector3<T> {
        let xn = self.normalize(p);
        Vector3::new(xn.x, xn.y, T::one()).normalize()
    }

    /// ∂p_cam/∂ξ for the update `p_cam ↦ exp(ξ)·p_cam`, columns `[rot | trans]`.
    pub fn point_jacobian(p_cam: &Vector3<T>) -> Matrix3x6<T> {
        let mut j = Matrix3x6::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-hat(p_cam)));
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&nalgebra::Matrix3::identity());
        j
    }

    /// ∂xn/∂ξ of the undistorted normalized coordinates.
    pub fn normalized_jacobian(&self, p_cam: &Vector3<T>) -> Result<Matrix2x6<T>> {
        Self::check_depth(p_cam)?;
        let inv_z = T::one() / p_cam.z;
        let inv_z2 = inv_z * inv_z;
        let dxn_dp = Matrix2x3::new(
            inv_z,
            T::zero(),
            -p_cam.x * inv_z2,
            T::zero(),
            inv_z,
            -p_cam.y * inv_z2,
        );
        Ok(dxn_dp * Self::point_jacobian(p_cam))
    }

    /// ∂pixel/∂ξ, 2×6 with columns `[rot | trans]`; the distortion Jacobian
    /// is chained in when coefficients are nonzero.
    pub fn reprojection_jacobian(&self, p_cam: &Vector3<T>) -> Result<Matrix2x6<T>> {
        let jn = self.normalized_jacobian(p_cam)?;
        let jd = if self.has_distortion() {
            let xn = Vector2::new(p_cam.x / p_cam.z, p_cam.y / p_cam.z);
            self.distortion_jacobian(&xn)
        } else {
            Matrix2::identity()
        };
        let scale = Matrix2::new(self.fx, T::zero(), T::zero(), self.fy);
        Ok(scale * jd * jn)
    }

    pub fn cast<U: Real>(&self) -> CameraModel<U> {
        CameraModel {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            distortion: self.distortion.map(|k| U::lit(k.as_f64())),
            width: self.width,
            height: self.height,
        }
    }
}
