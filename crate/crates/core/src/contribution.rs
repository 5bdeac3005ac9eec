//! Per-feature contribution to the six pose directions.
//!
//! The rotational and translational 3×3 blocks of `JᵀJ` are eigendecomposed
//! separately. Each feature's Jacobian sub-blocks are normalized to unit norm
//! and projected onto those eigenvectors; the absolute projections say how
//! much the feature constrains each direction. Point features have two rows,
//! normalized together by the Frobenius norm and reduced per direction with
//! an L1 sum.

use nalgebra::{Matrix3, Matrix6, RowVector3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureRef, FeatureSet, FeatureWeights};
use crate::geometry::{CameraModel, Pixel, RigidTransform};
use crate::image::GrayImage;
use crate::linalg::symmetric_eigen;
use crate::scalar::Real;
use crate::system::{self, StackedJacobian};

/// Sub-blocks with a smaller norm count as zero.
pub const ZERO_BLOCK_NORM: f64 = 1e-12;
/// Normalized contributions below this become weight 0.
pub const WEIGHT_CUTOFF: f64 = 1e-3;

/// Jacobian of every visible unit at `pose`, all with unit weight.
pub fn assemble_jacobian<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
) -> Result<StackedJacobian<T>> {
    let sys = system::linearize(pose, cam, features, &FeatureWeights::uniform(features), true)?;
    if sys.jacobian.n_rows() == 0 {
        return Err(Error::EmptyJacobian);
    }
    Ok(sys.jacobian)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenAnalysis<T: Real> {
    pub hessian: Matrix6<T>,
    pub h_rr: Matrix3<T>,
    pub h_tt: Matrix3<T>,
    /// Rotation/translation coupling; reported, not decomposed.
    pub h_rt: Matrix3<T>,
    /// Eigenvectors as columns, matching `sigma_r` order.
    pub v_r: Matrix3<T>,
    pub v_t: Matrix3<T>,
    /// Descending.
    pub sigma_r: Vector3<T>,
    pub sigma_t: Vector3<T>,
}

impl<T: Real> EigenAnalysis<T> {
    /// `σ_max / σ_min` of each block; infinite when a block is rank deficient.
    pub fn condition_numbers(&self) -> (T, T) {
        let cond = |s: &Vector3<T>| {
            if s[2] > T::zero() {
                s[0] / s[2]
            } else {
                T::lit(f64::INFINITY)
            }
        };
        (cond(&self.sigma_r), cond(&self.sigma_t))
    }
}

pub fn eigen_analyze<T: Real>(jac: &StackedJacobian<T>) -> Result<EigenAnalysis<T>> {
    if jac.n_rows() == 0 {
        return Err(Error::EmptyJacobian);
    }
    let hessian = jac.hessian();
    let h_rr: Matrix3<T> = hessian.fixed_view::<3, 3>(0, 0).into_owned();
    let h_tt: Matrix3<T> = hessian.fixed_view::<3, 3>(3, 3).into_owned();
    let h_rt: Matrix3<T> = hessian.fixed_view::<3, 3>(0, 3).into_owned();
    let er = symmetric_eigen(&h_rr);
    let et = symmetric_eigen(&h_tt);
    Ok(EigenAnalysis {
        hessian,
        h_rr,
        h_tt,
        h_rt,
        v_r: er.vectors,
        v_t: et.vectors,
        sigma_r: er.values,
        sigma_t: et.values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitContribution<T: Real> {
    pub unit: FeatureRef,
    pub kind: FeatureKind,
    pub location: Pixel<T>,
    pub d_r: Vector3<T>,
    pub d_t: Vector3<T>,
    /// Sum of the six entries of `d_r` and `d_t`.
    pub total: T,
    /// `total` over the largest total in the report.
    pub normalized: T,
    /// `normalized`, or 0 below [`WEIGHT_CUTOFF`].
    pub weight: T,
    /// The rotational sub-block was numerically zero.
    pub zero_rot: bool,
    pub zero_trans: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionReport<T: Real> {
    /// One entry per unit present in the Jacobian, in row order.
    pub units: Vec<UnitContribution<T>>,
    pub max_total: T,
    /// Units left out of the Jacobian (behind the camera).
    pub excluded: Vec<FeatureRef>,
}

impl<T: Real> ContributionReport<T> {
    /// Weights for every unit of `features`; units absent from the report get 0.
    pub fn weights(&self, features: &FeatureSet<T>) -> FeatureWeights<T> {
        let mut w = FeatureWeights::constant(features, T::zero());
        for u in &self.units {
            w.set(u.unit, u.weight);
        }
        w
    }

    pub fn get(&self, unit: FeatureRef) -> Option<&UnitContribution<T>> {
        self.units.iter().find(|u| u.unit == unit)
    }
}

/// `|F·V|` for a block `F` normalized by its Frobenius norm, reduced over
/// rows by an L1 sum. `None` when the block is numerically zero.
fn project<T: Real, const R: usize>(block: &[RowVector3<T>; R], v: &Matrix3<T>) -> Option<Vector3<T>> {
    let norm = block.iter().fold(T::zero(), |acc, r| acc + r.norm_squared()).sqrt();
    if !(norm >= T::lit(ZERO_BLOCK_NORM)) {
        return None;
    }
    let mut d = Vector3::zeros();
    for r in block {
        d += ((r / norm) * v).abs().transpose();
    }
    Some(d)
}

pub fn contributions<T: Real>(jac: &StackedJacobian<T>, eig: &EigenAnalysis<T>) -> ContributionReport<T> {
    let mut units: Vec<UnitContribution<T>> = Vec::with_capacity(jac.locations.len());
    let mut i = 0;
    for &(unit, location) in &jac.locations {
        let kind = jac.sources[i].kind;
        let row = |k: usize| jac.row(k);
        let (rot, trans) = match unit {
            FeatureRef::Point(_) => {
                let (a, b) = (row(i), row(i + 1));
                i += 2;
                let r = [a.fixed_columns::<3>(0).into_owned(), b.fixed_columns::<3>(0).into_owned()];
                let t = [a.fixed_columns::<3>(3).into_owned(), b.fixed_columns::<3>(3).into_owned()];
                (project(&r, &eig.v_r), project(&t, &eig.v_t))
            }
            FeatureRef::LineSample { .. } => {
                let a = row(i);
                i += 1;
                (
                    project(&[a.fixed_columns::<3>(0).into_owned()], &eig.v_r),
                    project(&[a.fixed_columns::<3>(3).into_owned()], &eig.v_t),
                )
            }
        };
        let d_r = rot.unwrap_or_else(Vector3::zeros);
        let d_t = trans.unwrap_or_else(Vector3::zeros);
        units.push(UnitContribution {
            unit,
            kind,
            location,
            d_r,
            d_t,
            total: d_r.sum() + d_t.sum(),
            normalized: T::zero(),
            weight: T::zero(),
            zero_rot: rot.is_none(),
            zero_trans: trans.is_none(),
        });
    }
    let max_total = units.iter().fold(T::zero(), |m, u| m.max(u.total));
    for u in &mut units {
        if max_total > T::zero() {
            u.normalized = u.total / max_total;
        }
        u.weight = if u.normalized < T::lit(WEIGHT_CUTOFF) {
            T::zero()
        } else {
            u.normalized
        };
    }
    ContributionReport {
        units,
        max_total,
        excluded: jac.excluded.clone(),
    }
}

/// Assemble, analyze and score in one call.
pub fn analyze<T: Real>(
    pose: &RigidTransform<T>,
    cam: &CameraModel<T>,
    features: &FeatureSet<T>,
) -> Result<(EigenAnalysis<T>, ContributionReport<T>)> {
    let jac = assemble_jacobian(pose, cam, features)?;
    let eig = eigen_analyze(&jac)?;
    let report = contributions(&jac, &eig);
    Ok((eig, report))
}

/// Mean normalized contribution per image cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub cell_px: u32,
    pub cols: u32,
    pub rows: u32,
    /// Row-major; `None` for cells without features.
    pub cells: Vec<Option<HeatCell>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub mean: f64,
    pub count: usize,
}

impl Heatmap {
    pub fn cell(&self, cu: u32, cv: u32) -> Option<HeatCell> {
        self.cells[(cv * self.cols + cu) as usize]
    }

    pub fn occupied(&self) -> impl Iterator<Item = (u32, u32, HeatCell)> + '_ {
        self.cells.iter().enumerate().filter_map(|(k, c)| {
            c.map(|c| (k as u32 % self.cols, k as u32 / self.cols, c))
        })
    }

    /// One line per cell; absent cells have an empty mean and count 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_u,cell_v,mean_contribution,count\n");
        for (k, c) in self.cells.iter().enumerate() {
            let (cu, cv) = (k as u32 % self.cols, k as u32 / self.cols);
            match c {
                Some(c) => out.push_str(&format!("{cu},{cv},{},{}\n", c.mean, c.count)),
                None => out.push_str(&format!("{cu},{cv},,0\n")),
            }
        }
        out
    }

    /// One pixel per cell, `round(255·mean)`; absent cells are 0.
    pub fn to_image(&self) -> GrayImage {
        let mut img = GrayImage::new(self.cols, self.rows);
        for (cu, cv, c) in self.occupied() {
            img.set(cu, cv, (c.mean.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        img
    }
}

/// Bin each unit's normalized contribution by its image location.
///
/// Locations outside the `width × height` image are ignored.
pub fn heatmap<T: Real>(report: &ContributionReport<T>, width: u32, height: u32, cell_px: u32) -> Result<Heatmap> {
    if cell_px == 0 || width == 0 || height == 0 {
        return Err(Error::InvalidConfig("heatmap needs cell_px >= 1 and a nonempty image".into()));
    }
    let cols = width.div_ceil(cell_px);
    let rows = height.div_ceil(cell_px);
    let mut sums = vec![(0.0, 0usize); (cols * rows) as usize];
    for u in &report.units {
        let (x, y) = (u.location.u.as_f64(), u.location.v.as_f64());
        if !(x >= 0.0 && y >= 0.0 && x < f64::from(width) && y < f64::from(height)) {
            continue;
        }
        let cu = (x as u32) / cell_px;
        let cv = (y as u32) / cell_px;
        let s = &mut sums[(cv * cols + cu) as usize];
        s.0 += u.normalized.as_f64();
        s.1 += 1;
    }
    let cells = sums
        .into_iter()
        .map(|(sum, count)| (count > 0).then(|| HeatCell { mean: sum / count as f64, count }))
        .collect();
    Ok(Heatmap {
        cell_px,
        cols,
        rows,
        cells,
    })
}

/// Serializable summary of an analysis.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub sigma_r: [f64; 3],
    pub sigma_t: [f64; 3],
    /// Eigenvectors as rows.
    pub v_r: [[f64; 3]; 3],
    pub v_t: [[f64; 3]; 3],
    pub h_rt: [[f64; 3]; 3],
    pub condition_numbers: [f64; 2],
    pub excluded: usize,
    pub features: Vec<FeatureDiagnostics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureDiagnostics {
    /// `point` or `line`.
    pub feature: &'static str,
    pub index: usize,
    /// Sample index for lines.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    pub kind: FeatureKind,
    pub location: [f64; 2],
    pub d_r: [f64; 3],
    pub d_t: [f64; 3],
    pub total: f64,
    pub weight: f64,
}

impl Diagnostics {
    pub fn new<T: Real>(eig: &EigenAnalysis<T>, report: &ContributionReport<T>) -> Self {
        let v3 = |v: &Vector3<T>| [v[0].as_f64(), v[1].as_f64(), v[2].as_f64()];
        let cols = |m: &Matrix3<T>| [0, 1, 2].map(|c| [0, 1, 2].map(|r| m[(r, c)].as_f64()));
        let rows = |m: &Matrix3<T>| [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)].as_f64()));
        let (cr, ct) = eig.condition_numbers();
        Self {
            sigma_r: v3(&eig.sigma_r),
            sigma_t: v3(&eig.sigma_t),
            v_r: cols(&eig.v_r),
            v_t: cols(&eig.v_t),
            h_rt: rows(&eig.h_rt),
            condition_numbers: [cr.as_f64(), ct.as_f64()],
            excluded: report.excluded.len(),
            features: report
                .units
                .iter()
                .map(|u| {
                    let (feature, index, sample) = match u.unit {
                        FeatureRef::Point(i) => ("point", i, None),
                        FeatureRef::LineSample { line, sample } => ("line", line, Some(sample)),
                    };
                    FeatureDiagnostics {
                        feature,
                        index,
                        sample,
                        kind: u.kind,
                        location: [u.location.u.as_f64(), u.location.v.as_f64()],
                        d_r: v3(&u.d_r),
                        d_t: v3(&u.d_t),
                        total: u.total.as_f64(),
                        weight: u.weight.as_f64(),
                    }
                })
                .collect(),
        }
    }
}
