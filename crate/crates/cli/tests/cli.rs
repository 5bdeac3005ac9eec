use std::path::Path;
use std::process::{Command, Output};

use extcal::image::GrayImage;
use serde_json::Value;

const CAMERA: &str = r#"{"fx": 500, "fy": 500, "cx": 320, "cy": 240, "width": 640, "height": 480}"#;
const IDENTITY: &str = r#"{"matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}"#;

fn extcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extcal")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn matrix(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
        .collect()
}

/// Writes a config naming `features.json`, `camera.json` and `transform.json`
/// in `dir`, with the given feature document.
fn small_scene(dir: &Path, features: &str) -> std::path::PathBuf {
    std::fs::write(dir.join("features.json"), features).unwrap();
    std::fs::write(dir.join("camera.json"), CAMERA).unwrap();
    std::fs::write(dir.join("transform.json"), IDENTITY).unwrap();
    let cfg = dir.join("config.json");
    std::fs::write(
        &cfg,
        r#"{"features": "features.json", "camera": "camera.json", "transform": "transform.json", "output_dir": "out"}"#,
    )
    .unwrap();
    cfg
}

fn synth(dir: &Path, spec: &str) -> std::path::PathBuf {
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, spec).unwrap();
    let scene = dir.join("scene");
    let o = extcal(&["synth", "--config", arg(&spec_path), "--out", arg(&scene)]);
    assert!(o.status.success(), "{}", stderr(&o));
    scene
}

#[test]
fn missing_feature_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"features": "nowhere.json", "camera": "camera.json"}"#).unwrap();
    let o = extcal(&["calibrate", "--config", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nowhere.json"), "{}", stderr(&o));
}

#[test]
fn synth_then_calibrate_recovers_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), r#"{"seed": 12, "n_points": 60, "n_lines": 20}"#);
    let o = extcal(&["calibrate", "--config", arg(&scene.join("config.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let result = json(&scene.join("results/result.json"));
    let manifest = json(&scene.join("manifest.json"));
    assert_eq!(result["weighting"], "contribution weighting");
    let (a, b) = (matrix(&result["matrix"]), matrix(&manifest["ground_truth"]));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-6), "{a:?} vs {b:?}");
    assert!(result["nre_px"].as_f64().unwrap() < 1e-6);
    for f in ["heatmap.csv", "heatmap.pgm", "diagnostics.json", "nre_corners.csv", "overlay.pgm"] {
        assert!(scene.join("results").join(f).exists(), "{f}");
    }
}

#[test]
fn no_weights_flag_selects_uniform_weighting() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), r#"{"seed": 3, "n_points": 40, "n_lines": 10}"#);
    let o = extcal(&["calibrate", "--no-weights", "--config", arg(&scene.join("config.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let result = json(&scene.join("results/result.json"));
    assert_eq!(result["weighting"], "uniform weighting");
    assert_eq!(result["per_round"].as_array().unwrap().len(), 1);
}

#[test]
fn init_is_deterministic_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), r#"{"seed": 4, "pixel_noise_sigma": 0.5, "outlier_fraction": 0.2}"#);
    let cfg = scene.join("config.json");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = extcal(&["init", "--seed", "17", "--config", arg(&cfg), "--out", arg(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("initial.json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn init_needs_four_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scene(
        dir.path(),
        r#"{"points": [
            {"p3d": [0, 0, 5], "px": [320, 240]},
            {"p3d": [1, 0, 5], "px": [420, 240]},
            {"p3d": [0, 1, 5], "px": [320, 340]}
        ], "lines": []}"#,
    );
    let o = extcal(&["init", "--config", arg(&cfg)]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
}

#[test]
fn analyze_single_feature_occupies_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scene(dir.path(), r#"{"points": [{"p3d": [0.2, -0.1, 4], "px": [345, 227.5]}]}"#);
    let o = extcal(&["analyze", "--config", arg(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/heatmap.csv")).unwrap();
    let occupied: Vec<_> = csv.lines().skip(1).filter(|l| !l.ends_with(",,0")).collect();
    assert_eq!(occupied, ["10,7,1,1"]);
    let img = GrayImage::load_pgm(&dir.path().join("out/heatmap.pgm")).unwrap();
    assert_eq!((img.width, img.height), (20, 15));
    assert_eq!(img.data.iter().filter(|&&v| v > 0).count(), 1);
}

#[test]
fn symmetric_scene_gives_equal_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scene(
        dir.path(),
        r#"{"points": [
            {"p3d": [1, 0.5, 5], "px": [420, 290]},
            {"p3d": [-1, 0.5, 5], "px": [220, 290]},
            {"p3d": [1, -0.5, 5], "px": [420, 190]},
            {"p3d": [-1, -0.5, 5], "px": [220, 190]}
        ]}"#,
    );
    let o = extcal(&["analyze", "--config", arg(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/heatmap.csv")).unwrap();
    let means: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| !l.ends_with(",,0"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(means.len(), 4);
    assert!(means.iter().all(|m| (m - means[0]).abs() < 1e-9), "{means:?}");
}

#[test]
fn analyze_rejects_empty_feature_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scene(dir.path(), r#"{"points": [], "lines": []}"#);
    let o = extcal(&["analyze", "--config", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn invalid_scene_spec_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"n_points": 10, "outlier_fraction": 1.5}"#).unwrap();
    let o = extcal(&["synth", "--config", arg(&spec), "--out", arg(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(3));
    std::fs::write(&spec, r#"{"n_pts": 10}"#).unwrap();
    let o = extcal(&["synth", "--config", arg(&spec), "--out", arg(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn evaluate_at_ground_truth_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth(dir.path(), r#"{"seed": 9}"#);
    let out = dir.path().join("eval");
    let o = extcal(&["evaluate", "--config", arg(&scene.join("config.json")), "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let nre = json(&out.join("nre.json"))["nre_px"].as_f64().unwrap();
    assert!(nre < 1e-9, "{nre}");
}

#[test]
fn single_point_renders_one_lit_pixel() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cloud.txt"), "0.1 0.2 5 80\n").unwrap();
    std::fs::write(dir.path().join("camera.json"), CAMERA).unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"cloud": "cloud.txt", "camera": "camera.json"}"#).unwrap();
    let out = dir.path().join("r");
    let o = extcal(&["render", "--config", arg(&cfg), "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = GrayImage::load_pgm(&out.join("intensity.pgm")).unwrap();
    let lit: Vec<_> = (0..img.height)
        .flat_map(|v| (0..img.width).map(move |u| (u, v)))
        .filter(|&(u, v)| img.get(u, v) > 0)
        .collect();
    assert_eq!(lit, [(330, 260)]);
    let map = std::fs::read_to_string(out.join("pixel_map.csv")).unwrap();
    assert_eq!(map, "pixel_u,pixel_v,point_indices\n330,260,0\n");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(extcal(&["calibrate", "--bogus"]).status.code(), Some(2));
    assert_eq!(extcal(&[]).status.code(), Some(2));
}
