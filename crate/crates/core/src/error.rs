use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by front ends to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Unreadable or malformed input files and invalid configuration.
    Input,
    /// Geometry that cannot support the requested computation.
    Geometry,
    /// Solver failures.
    Convergence,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point cloud contains no valid points")]
    EmptyCloud,
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("point behind camera (z = {z})")]
    PointBehindCamera { z: f64 },
    #[error("no point of the cloud is visible from the rendering camera")]
    NoVisiblePoints,
    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    OutOfBounds {
        u: i64,
        v: i64,
        width: usize,
        height: usize,
    },
    #[error("need at least {required} point correspondences, got {got}")]
    InsufficientPoints { required: usize, got: usize },
    #[error("every minimal sample was degenerate (collinear or coincident points)")]
    DegenerateConfiguration,
    #[error("no consensus: best hypothesis has {inliers} inliers (need 4)")]
    NoConsensus { inliers: usize },
    #[error("normal equations are singular: {0}")]
    SingularNormalEquations(String),
    #[error("no feature survived the visibility check")]
    EmptyJacobian,
    #[error("every residual row has zero weight")]
    EmptySystem,
    #[error("refinement diverged: {0}")]
    Diverged(String),
    #[error("corner set is empty")]
    EmptyCornerSet,
    #[error("checkerboard is not fully visible: {0}")]
    BoardOutOfView(String),
}

impl Error {
    /// Short stable name of the variant, printed by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Parse { .. } => "ParseError",
            Error::Schema(_) => "SchemaError",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyCloud => "EmptyCloud",
            Error::Geometry(_) => "GeometryError",
            Error::PointBehindCamera { .. } => "PointBehindCamera",
            Error::NoVisiblePoints => "NoVisiblePoints",
            Error::OutOfBounds { .. } => "OutOfBounds",
            Error::InsufficientPoints { .. } => "InsufficientPoints",
            Error::DegenerateConfiguration => "DegenerateConfiguration",
            Error::NoConsensus { .. } => "NoConsensus",
            Error::SingularNormalEquations(_) => "SingularNormalEquations",
            Error::EmptyJacobian => "EmptyJacobian",
            Error::EmptySystem => "EmptySystem",
            Error::Diverged(_) => "Diverged",
            Error::EmptyCornerSet => "EmptyCornerSet",
            Error::BoardOutOfView(_) => "BoardOutOfView",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::InvalidConfig(_)
            | Error::EmptyCloud => ErrorClass::Input,
            Error::SingularNormalEquations(_) | Error::Diverged(_) | Error::NoConsensus { .. } => {
                ErrorClass::Convergence
            }
            _ => ErrorClass::Geometry,
        }
    }

    /// One-line suggestion shown next to the error name.
    pub fn hint(&self) -> &'static str {
        match self {
            Error::Io { .. } => "check that the path exists and is readable",
            Error::Parse { .. } => "fix the offending line or re-export the file",
            Error::Schema(_) => "compare the document keys against the documented file format",
            Error::InvalidConfig(_) => "correct the configuration value",
            Error::EmptyCloud => "the cloud has no finite points; check the export",
            Error::Geometry(_) => "inspect the feature geometry (zero-length lines, bad normals)",
            Error::PointBehindCamera { .. } => "the transform places features behind the camera",
            Error::NoVisiblePoints => "adjust the rendering pose or intrinsics",
            Error::OutOfBounds { .. } => "query a pixel inside the image",
            Error::InsufficientPoints { .. } => "supply at least four point correspondences",
            Error::DegenerateConfiguration => "point features are collinear; add spread-out points",
            Error::NoConsensus { .. } => "raise the inlier threshold or improve the matches",
            Error::SingularNormalEquations(_) => {
                "feature geometry does not constrain all six degrees of freedom; add points or lines in other directions"
            }
            Error::EmptyJacobian => "no feature projects in front of the camera",
            Error::EmptySystem => "at least one feature needs a nonzero weight",
            Error::Diverged(_) => "start from a better initial transform",
            Error::EmptyCornerSet => "provide checkerboard corners",
            Error::BoardOutOfView(_) => "move the board into the camera frustum",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
