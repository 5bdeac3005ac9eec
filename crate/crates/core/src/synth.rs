//! Synthetic calibration scenes with known ground truth.
//!
//! Scenes are reproducible from a 64-bit seed: the generator is ChaCha8
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`) and every quantity is drawn in a
//! fixed order.

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::CornerSet;
use crate::features::{FeatureKind, FeatureSet, LineCorrespondence, PointCorrespondence};
use crate::geometry::{CameraModel, Pixel, RigidTransform};
use crate::io::CameraDoc;

/// Pixels kept free at the image border when placing features.
const MARGIN_PX: f64 = 10.0;
const MIN_LINE_PX: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoardSpec {
    /// Inner corners per row and column.
    pub rows: usize,
    pub cols: usize,
    pub square_m: f64,
    /// Board center distance along the optical axis, meters.
    pub distance_m: f64,
    pub noise_px: f64,
}

impl Default for BoardSpec {
    fn default() -> Self {
        Self {
            rows: 6,
            cols: 8,
            square_m: 0.15,
            distance_m: 5.0,
            noise_px: 0.0,
        }
    }
}

/// A group of lines packed into one image region whose 2D observations are
/// all shifted along their normals by the same offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasedCluster {
    /// Share of the lines moved into the cluster.
    pub fraction: f64,
    pub offset_px: f64,
    /// Cluster center; the image center when absent.
    pub center_px: Option<[f64; 2]>,
    pub radius_px: f64,
    /// Common 2D direction of the cluster lines; random per line when absent.
    pub orientation_deg: Option<f64>,
}

impl Default for BiasedCluster {
    fn default() -> Self {
        Self {
            fraction: 0.2,
            offset_px: 5.0,
            center_px: None,
            radius_px: 120.0,
            orientation_deg: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub n_points: usize,
    pub n_lines: usize,
    pub samples_per_line: usize,
    pub depth_range: [f64; 2],
    pub pixel_noise_sigma: f64,
    pub outlier_fraction: f64,
    pub rotation_magnitude_deg: f64,
    pub translation_magnitude_m: f64,
    pub seed: u64,
    pub camera: CameraDoc,
    pub board: BoardSpec,
    pub biased_cluster: Option<BiasedCluster>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_points: 100,
            n_lines: 50,
            samples_per_line: 5,
            depth_range: [2.0, 10.0],
            pixel_noise_sigma: 0.0,
            outlier_fraction: 0.0,
            rotation_magnitude_deg: 180.0,
            translation_magnitude_m: 0.5,
            seed: 0,
            camera: CameraDoc::default(),
            board: BoardSpec::default(),
            biased_cluster: None,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let [dmin, dmax] = self.depth_range;
        if !(dmin > 0.0 && dmax >= dmin && dmax.is_finite()) {
            return Err(Error::InvalidConfig("depth_range must satisfy 0 < min <= max".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidConfig("outlier_fraction must lie in [0, 1)".into()));
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("pixel_noise_sigma must be >= 0".into()));
        }
        if !(0.0..=180.0).contains(&self.rotation_magnitude_deg) {
            return Err(Error::InvalidConfig("rotation_magnitude_deg must lie in [0, 180]".into()));
        }
        if !(self.translation_magnitude_m >= 0.0 && self.translation_magnitude_m.is_finite()) {
            return Err(Error::InvalidConfig("translation_magnitude_m must be >= 0".into()));
        }
        if self.n_lines > 0 && self.samples_per_line == 0 {
            return Err(Error::InvalidConfig("samples_per_line must be >= 1".into()));
        }
        if self.board.rows < 2 || self.board.cols < 2 || !(self.board.square_m > 0.0) {
            return Err(Error::InvalidConfig("board needs rows, cols >= 2 and square_m > 0".into()));
        }
        if let Some(c) = &self.biased_cluster {
            if !(0.0..=1.0).contains(&c.fraction) || !c.offset_px.is_finite() || !(c.radius_px >= MIN_LINE_PX / 2.0) {
                return Err(Error::InvalidConfig(format!(
                    "biased_cluster needs fraction in [0, 1] and radius_px >= {}",
                    MIN_LINE_PX / 2.0
                )));
            }
        }
        self.camera.build()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// LiDAR → camera transform used to generate the observations.
    pub ground_truth: RigidTransform<f64>,
    pub features: FeatureSet<f64>,
    pub corners: CornerSet<f64>,
    pub cam: CameraModel<f64>,
    /// Point features whose pixel was replaced by a random one.
    pub outlier_points: Vec<usize>,
    /// Line features whose endpoints were replaced by random ones.
    pub outlier_lines: Vec<usize>,
    /// Lines placed in the biased cluster, if any.
    pub biased_lines: Vec<usize>,
}

/// Zero-mean Gaussian noise truncated at three standard deviations.
fn noise(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let n: f64 = StandardNormal.sample(rng);
        if n.abs() <= 3.0 {
            return n * sigma;
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_pixel(rng: &mut ChaCha8Rng, cam: &CameraModel<f64>) -> Pixel<f64> {
    Pixel::new(
        rng.random_range(MARGIN_PX..f64::from(cam.width) - MARGIN_PX),
        rng.random_range(MARGIN_PX..f64::from(cam.height) - MARGIN_PX),
    )
}

fn random_segment(rng: &mut ChaCha8Rng, cam: &CameraModel<f64>) -> [Pixel<f64>; 2] {
    loop {
        let a = random_pixel(rng, cam);
        let b = random_pixel(rng, cam);
        if a.distance(&b) >= MIN_LINE_PX {
            return [a, b];
        }
    }
}

/// Segment centered inside the cluster disk, fully inside the image.
fn cluster_segment(
    rng: &mut ChaCha8Rng,
    cam: &CameraModel<f64>,
    center: &Pixel<f64>,
    cluster: &BiasedCluster,
) -> [Pixel<f64>; 2] {
    let r = cluster.radius_px;
    loop {
        let rad = r * rng.random::<f64>().sqrt();
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let mid = Pixel::new(center.u + rad * ang.cos(), center.v + rad * ang.sin());
        let dir = match cluster.orientation_deg {
            Some(deg) => deg.to_radians(),
            None => rng.random_range(0.0..std::f64::consts::PI),
        };
        let half = rng.random_range(MIN_LINE_PX / 2.0..=r);
        let (du, dv) = (half * dir.cos(), half * dir.sin());
        let seg = [Pixel::new(mid.u - du, mid.v - dv), Pixel::new(mid.u + du, mid.v + dv)];
        let inside = |p: &Pixel<f64>| {
            p.u >= MARGIN_PX
                && p.v >= MARGIN_PX
                && p.u <= f64::from(cam.width) - MARGIN_PX
                && p.v <= f64::from(cam.height) - MARGIN_PX
        };
        if seg.iter().all(inside) {
            return seg;
        }
    }
}

fn back_project(cam: &CameraModel<f64>, px: &Pixel<f64>, depth: f64) -> Vector3<f64> {
    let xn = cam.normalize(px);
    Vector3::new(xn.x * depth, xn.y * depth, depth)
}

fn noisy(rng: &mut ChaCha8Rng, px: Pixel<f64>, sigma: f64) -> Pixel<f64> {
    let du = noise(rng, sigma);
    let dv = noise(rng, sigma);
    Pixel::new(px.u + du, px.v + dv)
}

/// Build a scene from `spec`.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let cam = spec.camera.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = spec.pixel_noise_sigma;
    let [dmin, dmax] = spec.depth_range;
    let depth = |rng: &mut ChaCha8Rng| if dmax > dmin { rng.random_range(dmin..dmax) } else { dmin };

    let axis = unit_vector(&mut rng);
    let angle = rng.random_range(0.0..=spec.rotation_magnitude_deg).to_radians();
    let tdir = unit_vector(&mut rng);
    let tmag = rng.random_range(0.0..=spec.translation_magnitude_m);
    let ground_truth = RigidTransform::from_axis_angle(axis * angle, tdir * tmag);
    let to_lidar = ground_truth.inverse();

    let mut points = Vec::with_capacity(spec.n_points);
    for _ in 0..spec.n_points {
        let px = random_pixel(&mut rng, &cam);
        let p_cam = back_project(&cam, &px, depth(&mut rng));
        let exact = cam.project(&p_cam)?;
        points.push(PointCorrespondence::new(
            to_lidar.transform_point(&p_cam),
            noisy(&mut rng, exact, sigma),
        )?);
    }

    let line_kind = |j: usize| {
        if j.is_multiple_of(2) {
            FeatureKind::IntensityLine
        } else {
            FeatureKind::DepthEdge
        }
    };
    let make_line = |rng: &mut ChaCha8Rng, [pa, pb]: [Pixel<f64>; 2], offset: f64, kind| -> Result<_> {
        let a = back_project(&cam, &pa, depth(rng));
        let b = back_project(&cam, &pb, depth(rng));
        let n = spec.samples_per_line;
        let samples = (0..n)
            .map(|k| {
                let t = (k as f64 + 1.0) / (n as f64 + 1.0);
                to_lidar.transform_point(&(a + (b - a) * t))
            })
            .collect();
        let (qa, qb) = (cam.project(&a)?, cam.project(&b)?);
        let d = (qb.to_vector() - qa.to_vector()).normalize() * offset;
        let shift = |q: Pixel<f64>| Pixel::new(q.u - d.y, q.v + d.x);
        let ea = noisy(rng, shift(qa), sigma);
        let eb = noisy(rng, shift(qb), sigma);
        LineCorrespondence::new(samples, [ea, eb], kind)
    };
    let mut lines = Vec::with_capacity(spec.n_lines);
    for j in 0..spec.n_lines {
        let seg = random_segment(&mut rng, &cam);
        lines.push(make_line(&mut rng, seg, 0.0, line_kind(j))?);
    }

    let n_out_pts = (spec.outlier_fraction * spec.n_points as f64).round() as usize;
    let mut outlier_points = index::sample(&mut rng, spec.n_points, n_out_pts).into_vec();
    outlier_points.sort_unstable();
    for &i in &outlier_points {
        points[i].pixel = random_pixel(&mut rng, &cam);
    }
    let n_out_lines = (spec.outlier_fraction * spec.n_lines as f64).round() as usize;
    let mut outlier_lines = index::sample(&mut rng, spec.n_lines, n_out_lines).into_vec();
    outlier_lines.sort_unstable();
    for &j in &outlier_lines {
        let endpoints = random_segment(&mut rng, &cam);
        let l = &lines[j];
        lines[j] = LineCorrespondence::new(l.points3d().to_vec(), endpoints, l.kind())?;
    }

    let mut biased_lines = Vec::new();
    if let Some(cluster) = &spec.biased_cluster {
        let k = (cluster.fraction * spec.n_lines as f64).round() as usize;
        biased_lines = index::sample(&mut rng, spec.n_lines, k).into_vec();
        biased_lines.sort_unstable();
        let center = cluster
            .center_px
            .map_or(Pixel::new(cam.cx, cam.cy), |[u, v]| Pixel::new(u, v));
        for &j in &biased_lines {
            let seg = cluster_segment(&mut rng, &cam, &center, cluster);
            lines[j] = make_line(&mut rng, seg, cluster.offset_px, line_kind(j))?;
        }
    }

    let board = spec.board;
    let board_pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, board.distance_m));
    let corners = generate_checkerboard(
        board.rows,
        board.cols,
        board.square_m,
        &board_pose,
        &ground_truth,
        &cam,
        board.noise_px,
        &mut rng,
    )?;

    Ok(SyntheticScene {
        ground_truth,
        features: FeatureSet::new(points, lines),
        corners,
        cam,
        outlier_points,
        outlier_lines,
        biased_lines,
    })
}

/// Planar grid of `rows × cols` corners spaced `square_m` apart.
///
/// `board_pose` maps board coordinates (grid in the z = 0 plane, centered on
/// the origin) into the camera frame. Returned 3D corners are in the LiDAR
/// frame; 2D detections are the projections plus optional noise.
#[allow(clippy::too_many_arguments)]
pub fn generate_checkerboard<R: Rng>(
    rows: usize,
    cols: usize,
    square_m: f64,
    board_pose: &RigidTransform<f64>,
    ground_truth: &RigidTransform<f64>,
    cam: &CameraModel<f64>,
    noise_px: f64,
    rng: &mut R,
) -> Result<CornerSet<f64>> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidConfig("checkerboard needs rows, cols >= 2".into()));
    }
    let to_lidar = ground_truth.inverse();
    let mut c3 = Vec::with_capacity(rows * cols);
    let mut c2 = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let local = Vector3::new(
                (c as f64 - (cols as f64 - 1.0) / 2.0) * square_m,
                (r as f64 - (rows as f64 - 1.0) / 2.0) * square_m,
                0.0,
            );
            let p_cam = board_pose.transform_point(&local);
            let px = cam
                .project(&p_cam)
                .map_err(|_| Error::BoardOutOfView(format!("corner ({r}, {c}) is behind the camera")))?;
            if !cam.contains(&px) {
                return Err(Error::BoardOutOfView(format!(
                    "corner ({r}, {c}) projects outside the image"
                )));
            }
            let (du, dv) = if noise_px > 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                let m: f64 = StandardNormal.sample(rng);
                (n * noise_px, m * noise_px)
            } else {
                (0.0, 0.0)
            };
            c3.push(to_lidar.transform_point(&p_cam));
            c2.push(Pixel::new(px.u + du, px.v + dv));
        }
    }
    CornerSet::new(c3, c2)
}
