//! File formats: point clouds (plain text or ASCII PCD) and the JSON
//! documents for features, cameras, corners and transforms.

use std::path::Path;

use nalgebra::{Matrix4, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::CornerSet;
use crate::features::{FeatureKind, FeatureSet, LineCorrespondence, PointCorrespondence};
use crate::geometry::{CameraModel, Pixel, RigidTransform};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T: Real> {
    pub points: Vec<Vector3<T>>,
    /// Sensor units, same length as `points`.
    pub intensities: Vec<T>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Vector3<T>>, intensities: Vec<T>) -> Result<Self> {
        if points.len() != intensities.len() {
            return Err(Error::Geometry(format!(
                "{} points but {} intensities",
                points.len(),
                intensities.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let finite = points.iter().flat_map(|p| p.iter()).chain(&intensities).all(|x| x.is_finite());
        if !finite {
            return Err(Error::Geometry("point cloud has non-finite values".into()));
        }
        Ok(Self { points, intensities })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A parsed cloud plus the number of rows dropped for non-finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCloud {
    pub cloud: PointCloud<f64>,
    pub dropped: usize,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_point_cloud(path: &Path) -> Result<LoadedCloud> {
    parse_point_cloud(&read(path)?)
}

/// Parse either an ASCII PCD (detected by its header) or plain
/// `x y z intensity` lines. `#` starts a comment line.
pub fn parse_point_cloud(text: &str) -> Result<LoadedCloud> {
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    let is_pcd = first.is_some_and(|l| {
        let key = l.split_whitespace().next().unwrap_or_default();
        matches!(key, "VERSION" | "FIELDS")
    });
    let mut points = Vec::new();
    let mut intensities = Vec::new();
    let mut dropped = 0;
    let mut push = |vals: [f64; 4]| {
        if vals.iter().all(|v| v.is_finite()) {
            points.push(Vector3::new(vals[0], vals[1], vals[2]));
            intensities.push(vals[3]);
        } else {
            dropped += 1;
        }
    };
    let parse_row = |lineno: usize, tokens: &[&str], cols: [usize; 4], width: usize| -> Result<[f64; 4]> {
        if tokens.len() != width {
            return Err(parse_err(lineno, format!("expected {width} values, found {}", tokens.len())));
        }
        let mut out = [0.0; 4];
        for (o, &c) in out.iter_mut().zip(&cols) {
            *o = tokens[c]
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid number {:?}", tokens[c])))?;
        }
        Ok(out)
    };

    if is_pcd {
        let mut fields: Option<Vec<String>> = None;
        let mut in_data = false;
        let mut declared = None;
        let mut cols = [0; 4];
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if in_data {
                let width = fields.as_ref().map_or(0, Vec::len);
                push(parse_row(lineno, &tokens, cols, width)?);
                continue;
            }
            match tokens[0] {
                "FIELDS" => {
                    let f: Vec<String> = tokens[1..].iter().map(|s| s.to_string()).collect();
                    for (k, name) in ["x", "y", "z", "intensity"].iter().enumerate() {
                        cols[k] = f.iter().position(|n| n == name).ok_or_else(|| {
                            parse_err(lineno, format!("PCD FIELDS lacks {name:?}"))
                        })?;
                    }
                    fields = Some(f);
                }
                "COUNT" => {
                    if tokens[1..].iter().any(|c| *c != "1") {
                        return Err(parse_err(lineno, "PCD fields with COUNT > 1 are not supported"));
                    }
                }
                "POINTS" => {
                    declared = Some(tokens.get(1).and_then(|s| s.parse::<usize>().ok()).ok_or_else(
                        || parse_err(lineno, "invalid POINTS value"),
                    )?);
                }
                "DATA" => {
                    if tokens.get(1) != Some(&"ascii") {
                        return Err(parse_err(lineno, "only DATA ascii PCD files are supported"));
                    }
                    if fields.is_none() {
                        return Err(parse_err(lineno, "PCD header has no FIELDS line"));
                    }
                    in_data = true;
                }
                "VERSION" | "SIZE" | "TYPE" | "WIDTH" | "HEIGHT" | "VIEWPOINT" => {}
                other => return Err(parse_err(lineno, format!("unexpected PCD header key {other:?}"))),
            }
        }
        if !in_data {
            return Err(parse_err(0, "PCD header has no DATA line"));
        }
        if let Some(n) = declared {
            if n != points.len() + dropped {
                return Err(parse_err(0, format!("PCD declares {n} points, found {}", points.len() + dropped)));
            }
        }
    } else {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            push(parse_row(i + 1, &tokens, [0, 1, 2, 3], 4)?);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(LoadedCloud {
        cloud: PointCloud { points, intensities },
        dropped,
    })
}

/// Plain-text `x y z intensity` rendering of a cloud.
pub fn format_point_cloud(cloud: &PointCloud<f64>) -> String {
    let mut out = String::new();
    for (p, i) in cloud.points.iter().zip(&cloud.intensities) {
        out.push_str(&format!("{} {} {} {}\n", p.x, p.y, p.z, i));
    }
    out
}

/// ASCII PCD rendering of a cloud.
pub fn format_pcd(cloud: &PointCloud<f64>) -> String {
    let n = cloud.len();
    let mut out = format!(
        "VERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n\
         WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n"
    );
    out.push_str(&format_point_cloud(cloud));
    out
}

/// Parse a JSON document, splitting syntax problems from schema problems.
pub fn from_json<D: DeserializeOwned>(text: &str) -> Result<D> {
    serde_json::from_str(text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => Error::Schema(e.to_string()),
            _ => parse_err(e.line(), e.to_string()),
        }
    })
}

pub fn load_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    from_json(&read(path)?).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        Error::Parse { line, message } => parse_err(line, format!("{}: {message}", path.display())),
        other => other,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document types serialize infallibly");
    s.push('\n');
    s
}

pub fn save_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_text(path, &to_json(value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointDoc {
    pub p3d: [f64; 3],
    pub px: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub p3d: Vec<[f64; 3]>,
    pub ep2d: [[f64; 2]; 2],
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDoc {
    #[serde(default)]
    pub points: Vec<PointDoc>,
    #[serde(default)]
    pub lines: Vec<LineDoc>,
}

impl FeatureDoc {
    pub fn from_features(fs: &FeatureSet<f64>) -> Self {
        Self {
            points: fs
                .points
                .iter()
                .map(|p| PointDoc {
                    p3d: p.point3d.into(),
                    px: [p.pixel.u, p.pixel.v],
                })
                .collect(),
            lines: fs
                .lines
                .iter()
                .map(|l| LineDoc {
                    p3d: l.points3d().iter().map(|p| (*p).into()).collect(),
                    ep2d: l.endpoints().map(|e| [e.u, e.v]),
                    kind: l.kind(),
                })
                .collect(),
        }
    }

    /// Validate and build; normals and anchors are derived from the endpoints.
    pub fn to_features(&self) -> Result<FeatureSet<f64>> {
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                PointCorrespondence::new(p.p3d.into(), Pixel::new(p.px[0], p.px[1]))
                    .map_err(|e| Error::Geometry(format!("points[{i}]: {e}")))
            })
            .collect::<Result<_>>()?;
        let lines = self
            .lines
            .iter()
            .enumerate()
            .map(|(j, l)| {
                if !l.kind.is_line() {
                    return Err(Error::Schema(format!("lines[{j}].kind must be intensity_line or depth_edge")));
                }
                let ep = l.ep2d.map(|[u, v]| Pixel::new(u, v));
                LineCorrespondence::new(l.p3d.iter().map(|&p| p.into()).collect(), ep, l.kind)
                    .map_err(|e| Error::Geometry(format!("lines[{j}]: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureSet::new(points, lines))
    }
}

pub fn load_feature_set(path: &Path) -> Result<FeatureSet<f64>> {
    load_json::<FeatureDoc>(path)?.to_features()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub dist: [f64; 5],
    pub width: u32,
    pub height: u32,
}

impl Default for CameraDoc {
    fn default() -> Self {
        Self {
            fx: 900.0,
            fy: 900.0,
            cx: 640.0,
            cy: 480.0,
            dist: [0.0; 5],
            width: 1280,
            height: 960,
        }
    }
}

impl CameraDoc {
    pub fn build(&self) -> Result<CameraModel<f64>> {
        CameraModel::new(self.fx, self.fy, self.cx, self.cy, self.dist, self.width, self.height)
    }

    pub fn from_model(cam: &CameraModel<f64>) -> Self {
        Self {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            dist: cam.distortion,
            width: cam.width,
            height: cam.height,
        }
    }
}

pub fn load_camera(path: &Path) -> Result<CameraModel<f64>> {
    load_json::<CameraDoc>(path)?.build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerDoc {
    pub corners3d: Vec<[f64; 3]>,
    pub corners2d: Vec<[f64; 2]>,
}

impl CornerDoc {
    pub fn from_corners(c: &CornerSet<f64>) -> Self {
        Self {
            corners3d: c.corners3d.iter().map(|p| (*p).into()).collect(),
            corners2d: c.corners2d.iter().map(|p| [p.u, p.v]).collect(),
        }
    }

    pub fn to_corners(&self) -> Result<CornerSet<f64>> {
        CornerSet::new(
            self.corners3d.iter().map(|&p| p.into()).collect(),
            self.corners2d.iter().map(|&[u, v]| Pixel::new(u, v)).collect(),
        )
    }
}

pub fn load_corners(path: &Path) -> Result<CornerSet<f64>> {
    load_json::<CornerDoc>(path)?.to_corners()
}

/// Row-major 4×4 homogeneous matrix.
pub type MatrixDoc = [[f64; 4]; 4];

pub fn matrix_doc(t: &RigidTransform<f64>) -> MatrixDoc {
    let m = t.to_matrix();
    [0, 1, 2, 3].map(|r| [0, 1, 2, 3].map(|c| m[(r, c)]))
}

pub fn transform_from_doc(doc: &MatrixDoc) -> Result<RigidTransform<f64>> {
    RigidTransform::from_matrix(&Matrix4::from_fn(|r, c| doc[r][c]))
}

/// A LiDAR → camera transform on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformDoc {
    pub matrix: MatrixDoc,
}

impl TransformDoc {
    pub fn new(t: &RigidTransform<f64>) -> Self {
        Self { matrix: matrix_doc(t) }
    }
}

/// Reads either a bare transform document or any JSON object carrying a
/// `matrix` field (such as a calibration result).
pub fn load_transform(path: &Path) -> Result<RigidTransform<f64>> {
    #[derive(Deserialize)]
    struct Loose {
        matrix: MatrixDoc,
    }
    let doc: Loose = load_json(path)?;
    transform_from_doc(&doc.matrix)
}
