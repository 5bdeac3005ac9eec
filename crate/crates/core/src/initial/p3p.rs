//! Lambda Twist P3P solver (Persson & Nordberg, ECCV 2018).
//!
//! Returns up to four `(R, t)` with `λᵢ·yᵢ = R·xᵢ + t` for three world points
//! `xᵢ` and unit bearing vectors `yᵢ`.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::RigidTransform;
use crate::scalar::Real;

pub fn solve<T: Real>(world: &[Vector3<T>; 3], bearings: &[Vector3<T>; 3]) -> Vec<RigidTransform<T>> {
    let two = T::lit(2.0);
    let [x1, x2, x3] = *world;
    let f1 = bearings[0].normalize();
    let f2 = bearings[1].normalize();
    let f3 = bearings[2].normalize();

    let d12 = x1 - x2;
    let d13 = x1 - x3;
    let d23 = x2 - x3;
    let d12xd13 = d12.cross(&d13);
    let Some(x_inv) = Matrix3::from_columns(&[d12, d13, d12xd13]).try_inverse() else {
        return Vec::new();
    };

    let a12 = d12.norm_squared();
    let a13 = d13.norm_squared();
    let a23 = d23.norm_squared();

    let c12 = f1.dot(&f2);
    let c23 = f2.dot(&f3);
    let c31 = f3.dot(&f1);
    let blob = c12 * c23 * c31 - T::one();

    let s12_sqr = T::one() - c12 * c12;
    let s23_sqr = T::one() - c23 * c23;
    let s31_sqr = T::one() - c31 * c31;

    let b12 = -two * c12;
    let b13 = -two * c31;
    let b23 = -two * c23;

    let p3 = a13 * (a23 * s31_sqr - a13 * s23_sqr);
    let p2 = two * blob * a23 * a13 + a13 * (two * a12 + a13) * s23_sqr + a23 * (a23 - a12) * s31_sqr;
    let p1 = a23 * (a13 - a23) * s12_sqr - a12 * a12 * s23_sqr - two * a12 * (blob * a23 + a13 * s23_sqr);
    let p0 = a12 * (a12 * s23_sqr - a23 * s12_sqr);
    if p3 == T::zero() {
        return Vec::new();
    }

    let g = cubic_root(p2 / p3, p1 / p3, p0 / p3);

    let d0 = Matrix3::new(
        a23 * (T::one() - g),
        -(a23 * c12),
        a23 * c31 * g,
        -(a23 * c12),
        a23 - a12 + a13 * g,
        -c23 * (a13 * g - a12),
        a23 * c31 * g,
        -c23 * (a13 * g - a12),
        g * (a13 - a23) - a12,
    );
    let (vecs, vals) = eigen_singular(&d0);

    let mut lambdas: Vec<Vector3<T>> = Vec::with_capacity(4);
    let ratio = (-vals[1] / vals[0]).max(T::zero()).sqrt();
    for r in [ratio, -ratio] {
        let w2 = T::one() / (r * vecs[(0, 1)] - vecs[(0, 0)]);
        let w0 = w2 * (vecs[(1, 0)] - r * vecs[(1, 1)]);
        let w1 = w2 * (vecs[(2, 0)] - r * vecs[(2, 1)]);
        let a = T::one() / ((a13 - a12) * w1 * w1 - a12 * b13 * w1 - a12);
        let b = a * (a13 * b12 * w1 - a12 * b13 * w0 - two * w0 * w1 * (a12 - a13));
        let c = a * ((a13 - a12) * w0 * w0 + a13 * b12 * w0 + a13);
        if b * b - T::lit(4.0) * c < T::zero() {
            continue;
        }
        let Some((tau1, tau2)) = quadratic_roots(b, c) else {
            continue;
        };
        for tau in [tau1, tau2] {
            if tau <= T::zero() {
                continue;
            }
            let d = a23 / (tau * (b23 + tau) + T::one());
            if d > T::zero() {
                let l2 = d.sqrt();
                let l3 = tau * l2;
                let l1 = w0 * l2 + w1 * l3;
                if l1 >= T::zero() {
                    lambdas.push(Vector3::new(l1, l2, l3));
                }
            }
        }
    }

    lambdas
        .into_iter()
        .filter_map(|lambda| {
            let l = refine_lambda(lambda, a12, a13, a23, b12, b13, b23);
            let ry1 = f1 * l.x;
            let ry2 = f2 * l.y;
            let ry3 = f3 * l.z;
            let yd1 = ry1 - ry2;
            let yd2 = ry1 - ry3;
            let y = Matrix3::from_columns(&[yd1, yd2, yd1.cross(&yd2)]);
            let rot = y * x_inv;
            let t = ry1 - rot * x1;
            let ok = rot.iter().chain(t.iter()).all(|v| v.is_finite());
            ok.then(|| RigidTransform::from_parts_unchecked(rot, t))
        })
        .collect()
}

/// Real roots of `r² + b·r + c`, computed without cancellation.
fn quadratic_roots<T: Real>(b: T, c: T) -> Option<(T, T)> {
    let disc = b * b - T::lit(4.0) * c;
    if disc < T::zero() {
        return None;
    }
    let y = disc.sqrt();
    let half = T::lit(0.5);
    if b < T::zero() {
        Some((half * (-b + y), half * (-b - y)))
    } else {
        let two = T::lit(2.0);
        Some((two * c / (-b + y), two * c / (-b - y)))
    }
}

/// One real root of `r³ + b·r² + c·r + d` with large derivative, by
/// Newton-Raphson from a carefully chosen start.
fn cubic_root<T: Real>(b: T, c: T, d: T) -> T {
    let three = T::lit(3.0);
    let two = T::lit(2.0);
    let mut r0;
    if b * b >= three * c {
        let v = (b * b - three * c).sqrt();
        let t1 = (-b - v) / three;
        let k = ((t1 + b) * t1 + c) * t1 + d;
        if k > T::zero() {
            r0 = t1 - (-k / (three * t1 + b)).sqrt();
        } else {
            let t2 = (-b + v) / three;
            let k = ((t2 + b) * t2 + c) * t2 + d;
            r0 = t2 + (-k / (three * t2 + b)).sqrt();
        }
    } else {
        r0 = -b / three;
        if ((three * r0 + two * b) * r0 + c).abs() < T::lit(1e-4) {
            r0 += T::one();
        }
    }
    for i in 0..50 {
        let fx = ((r0 + b) * r0 + c) * r0 + d;
        if i >= 7 && fx.abs() <= T::lit(1e-13) {
            break;
        }
        let fpx = (three * r0 + two * b) * r0 + c;
        if fpx == T::zero() {
            break;
        }
        r0 -= fx / fpx;
    }
    r0
}

/// Eigen-decomposition of a symmetric matrix known to have a zero
/// eigenvalue; the null vector is the last column.
fn eigen_singular<T: Real>(x: &Matrix3<T>) -> (Matrix3<T>, [T; 2]) {
    let row0 = Vector3::new(x[(0, 0)], x[(0, 1)], x[(0, 2)]);
    let row1 = Vector3::new(x[(1, 0)], x[(1, 1)], x[(1, 2)]);
    let v3 = row0.cross(&row1).normalize();

    let (m11, m12, m13) = (x[(0, 0)], x[(0, 1)], x[(0, 2)]);
    let (m22, m23, m33) = (x[(1, 1)], x[(1, 2)], x[(2, 2)]);
    let x12_sqr = m12 * m12;
    let b = -m11 - m22 - m33;
    let c = -x12_sqr - m13 * m13 - m23 * m23 + m11 * (m22 + m33) + m22 * m33;
    let (mut e1, mut e2) = quadratic_roots(b, c).unwrap_or((-b * T::lit(0.5), -b * T::lit(0.5)));
    if e1.abs() < e2.abs() {
        std::mem::swap(&mut e1, &mut e2);
    }
    let mx0011 = -m11 * m22;
    let prec_0 = m12 * m23 - m13 * m22;
    let prec_1 = m12 * m13 - m11 * m23;
    let vec_for = |e: T| {
        let tmp = T::one() / (e * (m11 + m22) + mx0011 - e * e + x12_sqr);
        let a1 = -(e * m13 + prec_0) * tmp;
        let a2 = -(e * m23 + prec_1) * tmp;
        let rnorm = T::one() / (a1 * a1 + a2 * a2 + T::one()).sqrt();
        Vector3::new(a1 * rnorm, a2 * rnorm, rnorm)
    };
    (
        Matrix3::from_columns(&[vec_for(e1), vec_for(e2), v3]),
        [e1, e2],
    )
}

/// A few Gauss-Newton steps on the three distance constraints.
fn refine_lambda<T: Real>(lambda: Vector3<T>, a12: T, a13: T, a23: T, b12: T, b13: T, b23: T) -> Vector3<T> {
    let two = T::lit(2.0);
    let residual = |l: &Vector3<T>| {
        Vector3::new(
            l.x * l.x + l.y * l.y + b12 * l.x * l.y - a12,
            l.x * l.x + l.z * l.z + b13 * l.x * l.z - a13,
            l.y * l.y + l.z * l.z + b23 * l.y * l.z - a23,
        )
    };
    let l1_norm = |v: &Vector3<T>| v.x.abs() + v.y.abs() + v.z.abs();
    let mut l = lambda;
    let mut res = residual(&l);
    for _ in 0..5 {
        if l1_norm(&res) < T::lit(1e-10) {
            break;
        }
        let dr1dl1 = two * l.x + b12 * l.y;
        let dr1dl2 = two * l.y + b12 * l.x;
        let dr2dl1 = two * l.x + b13 * l.z;
        let dr2dl3 = two * l.z + b13 * l.x;
        let dr3dl2 = two * l.y + b23 * l.z;
        let dr3dl3 = two * l.z + b23 * l.y;
        let det = T::one() / (-dr1dl1 * dr2dl3 * dr3dl2 - dr1dl2 * dr2dl1 * dr3dl3);
        let adj = Matrix3::new(
            -dr2dl3 * dr3dl2,
            -dr1dl2 * dr3dl3,
            dr1dl2 * dr2dl3,
            -dr2dl1 * dr3dl3,
            dr1dl1 * dr3dl3,
            -dr1dl1 * dr2dl3,
            dr2dl1 * dr3dl2,
            -dr1dl1 * dr3dl2,
            -dr1dl2 * dr2dl1,
        );
        let next = l - adj * res * det;
        let next_res = residual(&next);
        if !(l1_norm(&next_res) <= l1_norm(&res)) {
            break;
        }
        l = next;
        res = next_res;
    }
    l
}
