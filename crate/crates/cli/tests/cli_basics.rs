//! CLI behavior: exit codes, manifests, and byte-level reproducibility of
//! the subcommand outputs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn rgbd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgbd"))
}

fn tiny_bundle(dir: &Path) {
    let status = rgbd()
        .args([
            "synth-scene",
            "--out",
            dir.to_str().unwrap(),
            "--frames",
            "3",
            "--cameras",
            "2",
            "--width",
            "160",
            "--height",
            "96",
            "--lidar-density",
            "0.4",
            "--mvs-density",
            "0.3",
        ])
        .status()
        .unwrap();
    assert!(status.success());
}

fn file_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.unwrap();
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).unwrap().display().to_string();
            out.push((rel, std::fs::read(entry.path()).unwrap()));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn missing_out_dir_is_input_error() {
    let code = rgbd().args(["gen-trajectory", "--input", "/nonexistent.json"]).status().unwrap();
    assert_eq!(code.code(), Some(1));
}

#[test]
fn unknown_flag_is_input_error() {
    let code = rgbd().args(["curate-depth", "--frobnicate"]).status().unwrap();
    assert_eq!(code.code(), Some(1));
}

#[test]
fn missing_bundle_is_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let code = rgbd()
        .args([
            "curate-depth",
            "--bundle",
            "/definitely/not/here",
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(code.code(), Some(1));
}

#[test]
fn broken_external_backend_is_stage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    tiny_bundle(&bundle);
    let out = rgbd()
        .args([
            "curate-depth",
            "--bundle",
            bundle.to_str().unwrap(),
            "--out",
            tmp.path().join("curated").to_str().unwrap(),
            "--densifier",
            "external",
            "--densifier-cmd",
            "false",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage 'backend'"), "stderr: {stderr}");
}

#[test]
fn gen_trajectory_zero_range_is_byte_identical() {
    use nalgebra::{Rotation3, Vector3};
    use rgbd_core::geometry::Pose;
    use rgbd_core::io::json;
    use rgbd_core::nvs::Trajectory;

    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("traj.json");
    let poses: Vec<Pose> = (0..6)
        .map(|i| {
            Pose::new(
                Rotation3::from_euler_angles(0.02 * i as f64, -0.3, 0.7).into_inner(),
                Vector3::new(1.5 * i as f64, 0.25, -0.125),
            )
            .unwrap()
        })
        .collect();
    json::write_trajectory(&input, &Trajectory::new(poses).unwrap()).unwrap();

    let out_dir = tmp.path().join("out");
    let status = rgbd()
        .args([
            "gen-trajectory",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--tau-min",
            "0",
            "--tau-max",
            "0",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(&input).unwrap(),
        std::fs::read(out_dir.join("trajectory.json")).unwrap()
    );
}

#[test]
fn gen_trajectory_is_seed_deterministic() {
    use rgbd_core::geometry::Pose;
    use rgbd_core::io::json;
    use rgbd_core::nvs::Trajectory;

    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("traj.json");
    json::write_trajectory(&input, &Trajectory::new(vec![Pose::identity(); 8]).unwrap()).unwrap();

    let mut outs: Vec<PathBuf> = Vec::new();
    for (i, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let out_dir = tmp.path().join(i);
        let status = rgbd()
            .args([
                "gen-trajectory",
                "--input",
                input.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--seed",
                seed,
            ])
            .status()
            .unwrap();
        assert!(status.success());
        outs.push(out_dir.join("trajectory.json"));
    }
    let (a, b, c) = (
        std::fs::read(&outs[0]).unwrap(),
        std::fs::read(&outs[1]).unwrap(),
        std::fs::read(&outs[2]).unwrap(),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn synth_and_curate_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (b1, b2) = (tmp.path().join("b1"), tmp.path().join("b2"));
    tiny_bundle(&b1);
    tiny_bundle(&b2);
    assert_eq!(file_tree(&b1), file_tree(&b2), "synth-scene reruns differ");

    for (bundle, out, jobs) in [(&b1, "c1", "1"), (&b1, "c2", "3")] {
        let status = rgbd()
            .args([
                "curate-depth",
                "--bundle",
                bundle.to_str().unwrap(),
                "--out",
                tmp.path().join(out).to_str().unwrap(),
                "--densifier",
                "default",
                "--jobs",
                jobs,
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    // Manifests hash the same inputs and outputs; rasters are byte-identical
    // regardless of the worker count.
    assert_eq!(
        file_tree(&tmp.path().join("c1")),
        file_tree(&tmp.path().join("c2")),
        "curate-depth outputs depend on --jobs"
    );
}

#[test]
fn eval_depth_identity_reports_zero_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    tiny_bundle(&bundle);
    let pfm = bundle.join("frames/0000/front/depth.pfm");
    let out_dir = tmp.path().join("eval");
    let status = rgbd()
        .args([
            "eval-depth",
            "--pred",
            pfm.to_str().unwrap(),
            "--gt",
            pfm.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let pooled = &report["without_scaling"]["pooled"];
    assert_eq!(pooled["abs_rel"], 0.0);
    assert_eq!(pooled["delta1"], 1.0);
    assert!(out_dir.join("report.txt").exists());
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn config_file_round_trips_and_drives_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.toml");
    let cfg =
        rgbd_core::config::PipelineConfig { seed: 123, ..Default::default() };
    std::fs::write(&cfg_path, cfg.to_toml_string().unwrap()).unwrap();

    let bundle = tmp.path().join("bundle");
    tiny_bundle(&bundle);
    let out_dir = tmp.path().join("out");
    let status = rgbd()
        .args([
            "curate-depth",
            "--bundle",
            bundle.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
            "--frame",
            "0",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 123);
    assert_eq!(manifest["schema"], "manifest.v1");
    assert!(manifest["inputs"].as_object().unwrap().len() > 5);

    // Invalid config is an input error.
    std::fs::write(&cfg_path, "seed = 1\n[curation]\nlidar_window = 2\n").unwrap();
    let code = rgbd()
        .args([
            "curate-depth",
            "--bundle",
            bundle.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(code.code(), Some(1));
}
