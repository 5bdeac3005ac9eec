//! Perspective intensity images rendered from a point cloud, with the map
//! from each pixel back to the points that landed in it.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pixel, RigidTransform};
use crate::image::GrayImage;
use crate::io::PointCloud;
use crate::scalar::Real;

/// Percentiles used for the intensity stretch.
pub const STRETCH_LOW: f64 = 0.02;
pub const STRETCH_HIGH: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage<T: Real> {
    /// Unlit pixels are 0; lit pixels span 1..=255.
    pub image: GrayImage,
    /// Row-major pixel index → point indices, nearest first.
    pub pixel_to_points: BTreeMap<u32, Vec<usize>>,
    /// Camera pose the image was rendered from.
    pub pose: RigidTransform<T>,
}

impl<T: Real> IntensityImage<T> {
    pub fn width(&self) -> u32 {
        self.image.width
    }

    pub fn height(&self) -> u32 {
        self.image.height
    }
}

/// Integer pixel a projection lands in, if inside a `width × height` image.
pub fn pixel_cell<T: Real>(p: &Pixel<T>, width: u32, height: u32) -> Option<(u32, u32)> {
    let (u, v) = (p.u.as_f64().round(), p.v.as_f64().round());
    (u >= 0.0 && v >= 0.0 && u < f64::from(width) && v < f64::from(height)).then_some((u as u32, v as u32))
}

/// Value at fraction `q` of the sorted slice (nearest rank).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

pub fn render_intensity_image<T: Real>(
    cloud: &PointCloud<T>,
    cam: &CameraModel<T>,
    pose: &RigidTransform<T>,
) -> Result<IntensityImage<T>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    // (pixel index, depth, point index) for every visible point.
    let mut hits: Vec<(u32, T, usize)> = Vec::new();
    for (k, p) in cloud.points.iter().enumerate() {
        let pc = pose.transform_point(p);
        let Ok(px) = cam.project(&pc) else { continue };
        if let Some((x, y)) = pixel_cell(&px, cam.width, cam.height) {
            hits.push((y * cam.width + x, pc.z, k));
        }
    }
    if hits.is_empty() {
        return Err(Error::NoVisiblePoints);
    }
    hits.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.2.cmp(&b.2))
    });
    let mut pixel_to_points: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &(idx, _, k) in &hits {
        pixel_to_points.entry(idx).or_default().push(k);
    }

    let front: Vec<(u32, f64)> = pixel_to_points
        .iter()
        .map(|(&idx, pts)| (idx, cloud.intensities[pts[0]].as_f64()))
        .collect();
    let mut sorted: Vec<f64> = front.iter().map(|&(_, i)| i).collect();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, STRETCH_LOW);
    let hi = percentile(&sorted, STRETCH_HIGH);
    let mut image = GrayImage::new(cam.width, cam.height);
    for (idx, i) in front {
        let t = if hi > lo { ((i - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
        image.data[idx as usize] = 1 + (t * 254.0).round() as u8;
    }
    Ok(IntensityImage {
        image,
        pixel_to_points,
        pose: *pose,
    })
}

/// Point indices stored for the pixel containing `pixel`.
pub fn lookup_points<T: Real>(img: &IntensityImage<T>, pixel: &Pixel<T>) -> Result<Vec<usize>> {
    let (u, v) = (pixel.u.as_f64(), pixel.v.as_f64());
    let out_of_bounds = || Error::OutOfBounds {
        u: u.round() as i64,
        v: v.round() as i64,
        width: img.width() as usize,
        height: img.height() as usize,
    };
    let (x, y) = pixel_cell(pixel, img.width(), img.height()).ok_or_else(out_of_bounds)?;
    Ok(img
        .pixel_to_points
        .get(&(y * img.width() + x))
        .cloned()
        .unwrap_or_default())
}

/// Binary mask of the pixels hit by projected cloud points (255 where hit).
pub fn overlay<T: Real>(cloud: &PointCloud<T>, cam: &CameraModel<T>, pose: &RigidTransform<T>) -> GrayImage {
    let mut img = GrayImage::new(cam.width, cam.height);
    for p in &cloud.points {
        if let Ok(px) = cam.project(&pose.transform_point(p)) {
            if let Some((x, y)) = pixel_cell(&px, cam.width, cam.height) {
                img.set(x, y, 255);
            }
        }
    }
    img
}
