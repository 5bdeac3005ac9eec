//! Small dense symmetric eigensolver used by the Hessian analysis and the
//! solver's rank check.

use nalgebra::{SMatrix, SVector};

use crate::scalar::Real;

/// Eigen-decomposition `m = V·diag(values)·Vᵀ`, values sorted descending.
///
/// Each eigenvector is sign-normalized so its largest-magnitude component is
/// positive, which makes the output deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen<T: Real, const N: usize> {
    pub values: SVector<T, N>,
    pub vectors: SMatrix<T, N, N>,
}

/// Cyclic Jacobi iteration on the symmetric part of `m`.
pub fn symmetric_eigen<T: Real, const N: usize>(m: &SMatrix<T, N, N>) -> SymmetricEigen<T, N> {
    let half = T::lit(0.5);
    let mut a = (m + m.transpose()) * half;
    let mut v = SMatrix::<T, N, N>::identity();
    let scale = a.norm_squared();
    for _ in 0..64 {
        let mut off = T::zero();
        for p in 0..N {
            for q in (p + 1)..N {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= scale * T::eps() * T::eps() || off == T::zero() {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                let mut rot = SMatrix::<T, N, N>::identity();
                rot[(p, p)] = c;
                rot[(q, q)] = c;
                rot[(p, q)] = s;
                rot[(q, p)] = -s;
                a = rot.transpose() * a * rot;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                v *= rot;
            }
        }
    }
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut values = SVector::<T, N>::zeros();
    let mut vectors = SMatrix::<T, N, N>::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a[(src, src)];
        let mut col = v.column(src).into_owned();
        let lead = col.iter().fold(T::zero(), |best, &x| if x.abs() > best.abs() { x } else { best });
        if lead < T::zero() {
            col = -col;
        }
        vectors.set_column(dst, &col);
    }
    SymmetricEigen { values, vectors }
}
