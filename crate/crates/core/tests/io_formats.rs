use std::path::Path;

use extcal::image::GrayImage;
use extcal::io::{self, CameraDoc, CornerDoc, FeatureDoc, TransformDoc};
use extcal::synth::{generate, SceneSpec};
use extcal::Error;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn text_and_pcd_files_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let txt = write(dir.path(), "c.txt", "# x y z i\n0 0 1 100\n1.5 -2 3 7\n\n4 5 6 0.5\n");
    let plain = io::load_point_cloud(&txt).unwrap();
    let pcd = write(dir.path(), "c.pcd", &io::format_pcd(&plain.cloud));
    assert_eq!(io::load_point_cloud(&pcd).unwrap(), plain);
    assert_eq!(plain.cloud.len(), 3);
}

#[test]
fn missing_file_names_the_path() {
    let err = io::load_feature_set(Path::new("/no/such/features.json")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/no/such/features.json"));
}

#[test]
fn scene_documents_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate(&SceneSpec { seed: 2, n_points: 12, n_lines: 5, ..Default::default() }).unwrap();
    let fp = dir.path().join("f.json");
    let cp = dir.path().join("cam.json");
    let kp = dir.path().join("corners.json");
    let tp = dir.path().join("t.json");
    io::save_json(&fp, &FeatureDoc::from_features(&scene.features)).unwrap();
    io::save_json(&cp, &CameraDoc::from_model(&scene.cam)).unwrap();
    io::save_json(&kp, &CornerDoc::from_corners(&scene.corners)).unwrap();
    io::save_json(&tp, &TransformDoc::new(&scene.ground_truth)).unwrap();
    assert_eq!(io::load_feature_set(&fp).unwrap(), scene.features);
    assert_eq!(io::load_camera(&cp).unwrap(), scene.cam);
    assert_eq!(io::load_corners(&kp).unwrap(), scene.corners);
    let t = io::load_transform(&tp).unwrap();
    assert!(t.rotation_error(&scene.ground_truth) < 1e-12);
}

#[test]
fn camera_schema_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write(dir.path(), "a.json", r#"{"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 2, "height": 2, "skew": 0}"#);
    assert!(matches!(io::load_camera(&bad_key).unwrap_err(), Error::Schema(m) if m.contains("skew")));
    let bad_value = write(dir.path(), "b.json", r#"{"fx": -1, "fy": 1, "cx": 0, "cy": 0, "width": 2, "height": 2}"#);
    assert!(io::load_camera(&bad_value).is_err());
}

#[test]
fn corner_document_must_be_nonempty() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.json", r#"{"corners3d": [], "corners2d": []}"#);
    assert!(matches!(io::load_corners(&p).unwrap_err(), Error::EmptyCornerSet));
}

#[test]
fn non_rigid_matrix_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "t.json",
        r#"{"matrix": [[2,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}"#,
    );
    assert!(io::load_transform(&p).is_err());
}

#[test]
fn pgm_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = GrayImage::new(7, 4);
    img.set(3, 2, 200);
    let p = dir.path().join("x.pgm");
    img.save_pgm(&p).unwrap();
    assert_eq!(GrayImage::load_pgm(&p).unwrap(), img);
}
