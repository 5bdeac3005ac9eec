use std::path::{Path, PathBuf};

use extcal::contribution::{self, ContributionReport, Diagnostics, EigenAnalysis};
use extcal::evaluation::{nre_report, NreOptions, NreReport};
use extcal::features::{FeatureRef, FeatureWeights};
use extcal::initial::InitialEstimate;
use extcal::io::{self, CameraDoc, CornerDoc, FeatureDoc, MatrixDoc, PointCloud, TransformDoc};
use extcal::pipeline;
use extcal::refine::CalibrationResult;
use extcal::render;
use extcal::synth::{self, SceneSpec};
use extcal::{Camera, Error, Features, Result, Transform};
use serde::Serialize;

use crate::config::{required, RunConfig};
use crate::Options;

fn load_config(opts: &Options) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(opts.config.as_deref())?;
    if let Some(seed) = opts.seed {
        cfg.ransac.seed = seed;
    }
    if opts.no_weights {
        cfg.refine.use_weights = false;
    }
    if let Some(t) = &opts.transform {
        cfg.transform = Some(t.clone());
    }
    Ok(cfg)
}

fn out_dir(opts: &Options, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn inputs(cfg: &RunConfig) -> Result<(Features, Camera)> {
    let features = io::load_feature_set(required(&cfg.features, "features")?)?;
    let cam = io::load_camera(required(&cfg.camera, "camera")?)?;
    Ok((features, cam))
}

#[derive(Serialize)]
struct WeightsDoc {
    points: Vec<f64>,
    lines: Vec<Vec<f64>>,
}

impl From<&FeatureWeights<f64>> for WeightsDoc {
    fn from(w: &FeatureWeights<f64>) -> Self {
        Self {
            points: w.points.clone(),
            lines: w.lines.clone(),
        }
    }
}

#[derive(Serialize)]
struct InitialDoc {
    matrix: MatrixDoc,
    ransac_matrix: MatrixDoc,
    inlier_points: Vec<usize>,
    inlier_lines: Vec<usize>,
    rms_residual_px: f64,
}

impl InitialDoc {
    fn new(ransac: &InitialEstimate<f64>, joint: &InitialEstimate<f64>) -> Self {
        Self {
            matrix: io::matrix_doc(&joint.transform),
            ransac_matrix: io::matrix_doc(&ransac.transform),
            inlier_points: joint.inlier_point_indices.clone(),
            inlier_lines: joint.inlier_line_indices.clone(),
            rms_residual_px: joint.rms_residual_px,
        }
    }
}

#[derive(Serialize)]
struct RoundDoc {
    rms_px: f64,
    n_active_features: usize,
    step_norm: f64,
    cost: f64,
    inner_iterations: usize,
}

#[derive(Serialize)]
struct ResultDoc {
    /// LiDAR → camera, row-major.
    matrix: MatrixDoc,
    weighting: &'static str,
    uniform_weighting: bool,
    initial: InitialDoc,
    per_round: Vec<RoundDoc>,
    condition_numbers: [f64; 2],
    weights: WeightsDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    nre_px: Option<f64>,
}

impl ResultDoc {
    fn new(initial: InitialDoc, r: &CalibrationResult<f64>, nre_px: Option<f64>) -> Self {
        Self {
            matrix: io::matrix_doc(&r.transform),
            weighting: if r.uniform_weighting { "uniform weighting" } else { "contribution weighting" },
            uniform_weighting: r.uniform_weighting,
            initial,
            per_round: r
                .per_round
                .iter()
                .map(|s| RoundDoc {
                    rms_px: s.rms_px,
                    n_active_features: s.n_active_features,
                    step_norm: s.step_norm,
                    cost: s.cost,
                    inner_iterations: s.inner_iterations,
                })
                .collect(),
            condition_numbers: [r.condition_numbers.0, r.condition_numbers.1],
            weights: (&r.weights).into(),
            nre_px,
        }
    }
}

fn write_analysis(
    dir: &Path,
    cam: &Camera,
    eig: &EigenAnalysis<f64>,
    report: &ContributionReport<f64>,
    cell_px: u32,
) -> Result<()> {
    let hm = contribution::heatmap(report, cam.width, cam.height, cell_px)?;
    io::write_text(&dir.join("heatmap.csv"), &hm.to_csv())?;
    hm.to_image().save_pgm(&dir.join("heatmap.pgm"))?;
    io::save_json(&dir.join("diagnostics.json"), &Diagnostics::new(eig, report))
}

fn nre_csv(rep: &NreReport<f64>) -> String {
    let mut out =
        String::from("index,projected_u,projected_v,matched,pixel_error_px,range_m,factor,weighted_error_px\n");
    for (i, c) in rep.corners.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{},{},{}\n",
            c.projected.u,
            c.projected.v,
            c.matched,
            c.pixel_error,
            c.range,
            c.factor,
            c.factor * c.pixel_error
        ));
    }
    out
}

fn evaluate_corners(cfg: &RunConfig, cam: &Camera, t: &Transform) -> Result<Option<NreReport<f64>>> {
    let Some(path) = &cfg.corners else { return Ok(None) };
    let corners = io::load_corners(path)?;
    let opts = NreOptions {
        pinhole_only: cfg.pinhole_nre,
    };
    nre_report(t, cam, &corners, opts).map(Some)
}

pub fn calibrate(opts: &Options) -> Result<()> {
    let cfg = load_config(opts)?;
    let (features, cam) = inputs(&cfg)?;
    let cloud = cfg.cloud.as_deref().map(io::load_point_cloud).transpose()?;
    let dir = out_dir(opts, Some(&cfg))?;
    let cal = pipeline::calibrate(&features, &cam, &cfg.pipeline())?;
    let t = cal.result.transform;

    // Analysis on the inliers, reported with the original feature indices.
    let (pts, lns) = (&cal.joint.inlier_point_indices, &cal.joint.inlier_line_indices);
    let inliers = pipeline::subset(&features, pts, lns);
    let (eig, mut report) = contribution::analyze(&t, &cam, &inliers)?;
    for u in &mut report.units {
        u.unit = match u.unit {
            FeatureRef::Point(i) => FeatureRef::Point(pts[i]),
            FeatureRef::LineSample { line, sample } => FeatureRef::LineSample { line: lns[line], sample },
        };
    }
    write_analysis(&dir, &cam, &eig, &report, cfg.heatmap_cell_px)?;

    let nre = evaluate_corners(&cfg, &cam, &t)?;
    if let Some(rep) = &nre {
        io::write_text(&dir.join("nre_corners.csv"), &nre_csv(rep))?;
    }
    if let Some(loaded) = &cloud {
        render::overlay(&loaded.cloud, &cam, &t).save_pgm(&dir.join("overlay.pgm"))?;
    }
    let doc = ResultDoc::new(InitialDoc::new(&cal.ransac, &cal.joint), &cal.result, nre.as_ref().map(|r| r.nre));
    io::save_json(&dir.join("result.json"), &doc)?;
    let last = cal.result.per_round.last();
    println!(
        "calibrated ({}): rms {:.4} px over {} features{}",
        doc.weighting,
        last.map_or(f64::NAN, |s| s.rms_px),
        last.map_or(0, |s| s.n_active_features),
        nre.map(|r| format!(", NRE {:.4} px", r.nre)).unwrap_or_default()
    );
    Ok(())
}

pub fn init(opts: &Options) -> Result<()> {
    let cfg = load_config(opts)?;
    let (features, cam) = inputs(&cfg)?;
    let dir = out_dir(opts, Some(&cfg))?;
    let pcfg = cfg.pipeline();
    pcfg.validate()?;
    let (ransac, joint) = pipeline::initialize(&features, &cam, &pcfg)?;
    io::save_json(&dir.join("initial.json"), &InitialDoc::new(&ransac, &joint))?;
    println!(
        "initial estimate: {} point and {} line inliers, rms {:.4} px",
        joint.inlier_point_indices.len(),
        joint.inlier_line_indices.len(),
        joint.rms_residual_px
    );
    Ok(())
}

pub fn analyze(opts: &Options) -> Result<()> {
    let cfg = load_config(opts)?;
    let (features, cam) = inputs(&cfg)?;
    if features.is_empty() {
        return Err(Error::Geometry("feature set is empty".into()));
    }
    let t = io::load_transform(required(&cfg.transform, "transform")?)?;
    let dir = out_dir(opts, Some(&cfg))?;
    let (eig, report) = contribution::analyze(&t, &cam, &features)?;
    write_analysis(&dir, &cam, &eig, &report, cfg.heatmap_cell_px)?;
    let (cr, ct) = eig.condition_numbers();
    println!("analyzed {} units; condition numbers rot {cr:.3e}, trans {ct:.3e}", report.units.len());
    Ok(())
}

#[derive(Serialize)]
struct NreDoc {
    nre_px: f64,
    n_corners: usize,
    pinhole_only: bool,
}

pub fn evaluate(opts: &Options) -> Result<()> {
    let cfg = load_config(opts)?;
    let cam = io::load_camera(required(&cfg.camera, "camera")?)?;
    let t = io::load_transform(required(&cfg.transform, "transform")?)?;
    required(&cfg.corners, "corners")?;
    let dir = out_dir(opts, Some(&cfg))?;
    let rep = evaluate_corners(&cfg, &cam, &t)?.expect("corners path checked above");
    io::write_text(&dir.join("nre_corners.csv"), &nre_csv(&rep))?;
    let doc = NreDoc {
        nre_px: rep.nre,
        n_corners: rep.corners.len(),
        pinhole_only: cfg.pinhole_nre,
    };
    io::save_json(&dir.join("nre.json"), &doc)?;
    println!("NRE {:.6} px over {} corners", rep.nre, rep.corners.len());
    Ok(())
}

#[derive(Serialize)]
struct ManifestDoc {
    ground_truth: MatrixDoc,
    spec: SceneSpec,
    outlier_points: Vec<usize>,
    outlier_lines: Vec<usize>,
    biased_lines: Vec<usize>,
}

/// Every 3D point of the scene, with a deterministic intensity pattern.
fn scene_cloud(scene: &synth::SyntheticScene) -> PointCloud<f64> {
    let fs = &scene.features;
    let points: Vec<_> = fs
        .points
        .iter()
        .map(|p| p.point3d)
        .chain(fs.lines.iter().flat_map(|l| l.points3d().iter().copied()))
        .chain(scene.corners.corners3d.iter().copied())
        .collect();
    let intensities = (0..points.len()).map(|k| (20 + (k * 37) % 220) as f64).collect();
    PointCloud { points, intensities }
}

pub fn synth(opts: &Options) -> Result<()> {
    let mut spec: SceneSpec = match &opts.config {
        Some(path) => io::load_json(path)?,
        None => SceneSpec::default(),
    };
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    let scene = synth::generate(&spec)?;
    let dir = out_dir(opts, None)?;
    io::save_json(&dir.join("features.json"), &FeatureDoc::from_features(&scene.features))?;
    io::save_json(&dir.join("camera.json"), &CameraDoc::from_model(&scene.cam))?;
    io::save_json(&dir.join("corners.json"), &CornerDoc::from_corners(&scene.corners))?;
    io::write_text(&dir.join("cloud.txt"), &io::format_point_cloud(&scene_cloud(&scene)))?;
    io::save_json(&dir.join("ground_truth.json"), &TransformDoc::new(&scene.ground_truth))?;
    let manifest = ManifestDoc {
        ground_truth: io::matrix_doc(&scene.ground_truth),
        spec,
        outlier_points: scene.outlier_points.clone(),
        outlier_lines: scene.outlier_lines.clone(),
        biased_lines: scene.biased_lines.clone(),
    };
    io::save_json(&dir.join("manifest.json"), &manifest)?;
    let run = RunConfig {
        cloud: Some("cloud.txt".into()),
        features: Some("features.json".into()),
        camera: Some("camera.json".into()),
        corners: Some("corners.json".into()),
        output_dir: Some("results".into()),
        transform: Some("ground_truth.json".into()),
        ..RunConfig::default()
    };
    io::save_json(&dir.join("config.json"), &run)?;
    println!(
        "scene written to {} ({} points, {} lines)",
        dir.display(),
        scene.features.n_points(),
        scene.features.lines.len()
    );
    Ok(())
}

fn pixel_map_csv(img: &render::IntensityImage<f64>) -> String {
    let mut out = String::from("pixel_u,pixel_v,point_indices\n");
    for (&idx, pts) in &img.pixel_to_points {
        let list: Vec<String> = pts.iter().map(ToString::to_string).collect();
        out.push_str(&format!("{},{},{}\n", idx % img.width(), idx / img.width(), list.join(" ")));
    }
    out
}

pub fn render(opts: &Options) -> Result<()> {
    let cfg = load_config(opts)?;
    let loaded = io::load_point_cloud(required(&cfg.cloud, "cloud")?)?;
    let cam = io::load_camera(required(&cfg.camera, "camera")?)?;
    let pose = match (&opts.transform, &cfg.render_pose) {
        (Some(path), _) => io::load_transform(path)?,
        (None, Some(m)) => io::transform_from_doc(m)?,
        (None, None) => Transform::identity(),
    };
    let dir = out_dir(opts, Some(&cfg))?;
    let img = render::render_intensity_image(&loaded.cloud, &cam, &pose)?;
    img.image.save_pgm(&dir.join("intensity.pgm"))?;
    io::write_text(&dir.join("pixel_map.csv"), &pixel_map_csv(&img))?;
    println!(
        "rendered {} lit pixels from {} points ({} dropped as non-finite)",
        img.pixel_to_points.len(),
        loaded.cloud.len(),
        loaded.dropped
    );
    Ok(())
}
