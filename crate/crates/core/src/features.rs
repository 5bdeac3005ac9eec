//! 2D–3D correspondence data model.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pixel, RigidTransform};
use crate::scalar::Real;

/// Origin of a correspondence. Point features come from intensity-image
/// keypoints; lines from intensity-image segments or depth-continuous edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    IntensityPoint,
    IntensityLine,
    DepthEdge,
}

impl FeatureKind {
    pub fn is_line(self) -> bool {
        !matches!(self, FeatureKind::IntensityPoint)
    }
}

/// A LiDAR point matched to an image pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCorrespondence<T: Real> {
    pub point3d: Vector3<T>,
    pub pixel: Pixel<T>,
}

impl<T: Real> PointCorrespondence<T> {
    pub fn new(point3d: Vector3<T>, pixel: Pixel<T>) -> Result<Self> {
        if !point3d.iter().all(|x| x.is_finite()) || !pixel.is_finite() {
            return Err(Error::Geometry("point correspondence has non-finite values".into()));
        }
        Ok(Self { point3d, pixel })
    }

    pub fn kind(&self) -> FeatureKind {
        FeatureKind::IntensityPoint
    }

    /// Projection error `project(T·P) − pixel`.
    pub fn residual(&self, pose: &RigidTransform<T>, cam: &CameraModel<T>) -> Result<Vector2<T>> {
        let p = cam.project(&pose.transform_point(&self.point3d))?;
        Ok(p.to_vector() - self.pixel.to_vector())
    }
}

/// Samples along a 3D edge matched to a 2D image segment.
///
/// The 2D line is stored as a unit normal and an anchor at the segment
/// midpoint; both are derived from the endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LineCorrespondence<T: Real> {
    points3d: Vec<Vector3<T>>,
    endpoints: [Pixel<T>; 2],
    normal: Vector2<T>,
    anchor: Pixel<T>,
    kind: FeatureKind,
}

impl<T: Real> LineCorrespondence<T> {
    pub fn new(points3d: Vec<Vector3<T>>, endpoints: [Pixel<T>; 2], kind: FeatureKind) -> Result<Self> {
        if !kind.is_line() {
            return Err(Error::Schema(format!("{kind:?} is not a line feature kind")));
        }
        if points3d.is_empty() {
            return Err(Error::Geometry("line correspondence needs at least one 3D sample".into()));
        }
        if !points3d.iter().flat_map(|p| p.iter()).all(|x| x.is_finite())
            || !endpoints.iter().all(Pixel::is_finite)
        {
            return Err(Error::Geometry("line correspondence has non-finite values".into()));
        }
        let dir = endpoints[1].to_vector() - endpoints[0].to_vector();
        let len = dir.norm();
        if !(len > T::lit(1e-12)) {
            return Err(Error::Geometry(
                "line endpoints coincide, normal is undefined".into(),
            ));
        }
        let normal = Vector2::new(-dir.y / len, dir.x / len);
        let half = T::lit(0.5);
        let anchor = Pixel::new(
            (endpoints[0].u + endpoints[1].u) * half,
            (endpoints[0].v + endpoints[1].v) * half,
        );
        Ok(Self {
            points3d,
            endpoints,
            normal,
            anchor,
            kind,
        })
    }

    pub fn points3d(&self) -> &[Vector3<T>] {
        &self.points3d
    }

    pub fn endpoints(&self) -> &[Pixel<T>; 2] {
        &self.endpoints
    }

    pub fn normal(&self) -> &Vector2<T> {
        &self.normal
    }

    pub fn anchor(&self) -> &Pixel<T> {
        &self.anchor
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    /// Signed distance `nᵀ(p − q)` of a projected pixel from the line.
    pub fn distance(&self, pixel: &Pixel<T>) -> T {
        self.normal.dot(&(pixel.to_vector() - self.anchor.to_vector()))
    }

    /// Orthogonal foot of `pixel` on the line.
    pub fn foot(&self, pixel: &Pixel<T>) -> Pixel<T> {
        Pixel::from_vector(&(pixel.to_vector() - self.normal * self.distance(pixel)))
    }

    /// Point-to-line residual of one 3D sample under `pose`.
    pub fn residual(
        &self,
        pose: &RigidTransform<T>,
        cam: &CameraModel<T>,
        sample: usize,
    ) -> Result<T> {
        let p = self.points3d.get(sample).ok_or_else(|| {
            Error::Geometry(format!("line has no sample {sample}"))
        })?;
        let px = cam.project(&pose.transform_point(p))?;
        Ok(self.distance(&px))
    }
}

/// Index of a residual unit: a whole point feature or one line sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureRef {
    Point(usize),
    LineSample { line: usize, sample: usize },
}

impl FeatureRef {
    pub fn is_line_sample(self) -> bool {
        matches!(self, FeatureRef::LineSample { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet<T: Real> {
    pub points: Vec<PointCorrespondence<T>>,
    pub lines: Vec<LineCorrespondence<T>>,
}

impl<T: Real> FeatureSet<T> {
    pub fn new(points: Vec<PointCorrespondence<T>>, lines: Vec<LineCorrespondence<T>>) -> Self {
        Self { points, lines }
    }

    /// Convert the scalar type; line normals are re-derived in the new type,
    /// which fails if a line's endpoints coincide after rounding.
    pub fn cast<U: Real>(&self) -> Result<FeatureSet<U>> {
        let v3 = |p: &Vector3<T>| p.map(|x| U::lit(x.as_f64()));
        let px = |p: &Pixel<T>| Pixel::new(U::lit(p.u.as_f64()), U::lit(p.v.as_f64()));
        Ok(FeatureSet {
            points: self
                .points
                .iter()
                .map(|p| PointCorrespondence {
                    point3d: v3(&p.point3d),
                    pixel: px(&p.pixel),
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineCorrespondence::new(l.points3d.iter().map(v3).collect(), l.endpoints.map(|e| px(&e)), l.kind))
                .collect::<Result<_>>()?,
        })
    }

    /// Number of point features, N.
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Total number of 3D line samples, M.
    pub fn n_line_samples(&self) -> usize {
        self.lines.iter().map(|l| l.points3d.len()).sum()
    }

    /// Residual rows of the full system, 2N + M.
    pub fn n_rows(&self) -> usize {
        2 * self.n_points() + self.n_line_samples()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.lines.is_empty()
    }

    /// At least six residual rows are needed to constrain six unknowns.
    pub fn check_solvable(&self) -> Result<()> {
        if self.n_rows() < 6 {
            return Err(Error::Geometry(format!(
                "{} residual rows cannot constrain 6 degrees of freedom",
                self.n_rows()
            )));
        }
        Ok(())
    }

    /// All residual units in canonical order: points, then line samples.
    pub fn units(&self) -> impl Iterator<Item = FeatureRef> + '_ {
        (0..self.points.len()).map(FeatureRef::Point).chain(
            self.lines.iter().enumerate().flat_map(|(line, l)| {
                (0..l.points3d.len()).map(move |sample| FeatureRef::LineSample { line, sample })
            }),
        )
    }

    pub fn kind_of(&self, unit: FeatureRef) -> FeatureKind {
        match unit {
            FeatureRef::Point(_) => FeatureKind::IntensityPoint,
            FeatureRef::LineSample { line, .. } => self.lines[line].kind,
        }
    }
}

/// Per-unit weights: one per point feature (shared by its two rows) and one
/// per line sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWeights<T: Real> {
    pub points: Vec<T>,
    pub lines: Vec<Vec<T>>,
}

impl<T: Real> FeatureWeights<T> {
    pub fn constant(features: &FeatureSet<T>, value: T) -> Self {
        Self {
            points: vec![value; features.points.len()],
            lines: features
                .lines
                .iter()
                .map(|l| vec![value; l.points3d.len()])
                .collect(),
        }
    }

    pub fn uniform(features: &FeatureSet<T>) -> Self {
        Self::constant(features, T::one())
    }

    /// Weight 1 for selected points and lines, 0 elsewhere.
    pub fn selection(features: &FeatureSet<T>, points: &[usize], lines: &[usize]) -> Self {
        let mut w = Self::constant(features, T::zero());
        for &i in points {
            w.points[i] = T::one();
        }
        for &j in lines {
            w.lines[j].iter_mut().for_each(|x| *x = T::one());
        }
        w
    }

    pub fn get(&self, unit: FeatureRef) -> T {
        match unit {
            FeatureRef::Point(i) => self.points[i],
            FeatureRef::LineSample { line, sample } => self.lines[line][sample],
        }
    }

    pub fn set(&mut self, unit: FeatureRef, value: T) {
        match unit {
            FeatureRef::Point(i) => self.points[i] = value,
            FeatureRef::LineSample { line, sample } => self.lines[line][sample] = value,
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            points: self.points.iter().map(|&w| w * c).collect(),
            lines: self
                .lines
                .iter()
                .map(|l| l.iter().map(|&w| w * c).collect())
                .collect(),
        }
    }

    /// Flat view in canonical unit order.
    pub fn flatten(&self) -> Vec<T> {
        self.points
            .iter()
            .chain(self.lines.iter().flatten())
            .copied()
            .collect()
    }

    /// L∞ distance between two weight vectors of the same shape.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.flatten()
            .into_iter()
            .zip(other.flatten())
            .fold(T::zero(), |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn matches_shape(&self, features: &FeatureSet<T>) -> bool {
        self.points.len() == features.points.len()
            && self.lines.len() == features.lines.len()
            && self
                .lines
                .iter()
                .zip(&features.lines)
                .all(|(w, l)| w.len() == l.points3d.len())
    }
}
