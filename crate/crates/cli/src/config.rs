//! Run configuration: one JSON document naming the inputs plus solver
//! settings. Relative paths resolve against the document's directory.

use std::path::{Path, PathBuf};

use extcal::initial::{JointRefineConfig, RansacConfig};
use extcal::io::{self, MatrixDoc};
use extcal::pipeline::PipelineConfig;
use extcal::refine::RefineConfig;
use extcal::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cloud: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub camera: Option<PathBuf>,
    pub corners: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Extrinsic used by `analyze` and `evaluate`.
    pub transform: Option<PathBuf>,
    pub ransac: RansacConfig,
    pub joint: JointRefineConfig,
    pub refine: RefineConfig,
    pub heatmap_cell_px: u32,
    /// Pose of the virtual camera for `render`; identity when absent.
    pub render_pose: Option<MatrixDoc>,
    /// Evaluate NRE without lens distortion.
    pub pinhole_nre: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cloud: None,
            features: None,
            camera: None,
            corners: None,
            output_dir: None,
            transform: None,
            ransac: RansacConfig::default(),
            joint: JointRefineConfig::default(),
            refine: RefineConfig::default(),
            heatmap_cell_px: 32,
            render_pose: None,
            pinhole_nre: false,
        }
    }
}

impl RunConfig {
    /// Load from `path`, or defaults when no config file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let mut cfg: Self = io::load_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.cloud,
            &mut cfg.features,
            &mut cfg.camera,
            &mut cfg.corners,
            &mut cfg.output_dir,
            &mut cfg.transform,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.heatmap_cell_px == 0 {
            return Err(Error::InvalidConfig("heatmap_cell_px must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            ransac: self.ransac,
            joint: self.joint,
            refine: self.refine,
        }
    }
}

/// The configured path for `field`, or an error naming the missing key.
pub fn required<'a>(value: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig(format!("`{field}` path is required for this command")))
}
