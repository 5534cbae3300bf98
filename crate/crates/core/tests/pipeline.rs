//! Cross-module pipeline tests: the curation identity fixed point, the
//! external-process densifier protocol, and bundle round trips.

use nalgebra::{Point3, Vector3};
use rgbd_core::cloud::PointCloud;
use rgbd_core::config::PipelineConfig;
use rgbd_core::curation::{self, CurationInputs, MedianDensifier};
use rgbd_core::geometry::{Intrinsics, Pose, RelativeTransform};
use rgbd_core::io::pfm;
use rgbd_core::render::{depth_to_cloud, DepthRange, Mask, RgbRaster};
use rgbd_core::synth::{raycast_depth, ColorSpec, Primitive, SynthScene};

fn range() -> DepthRange {
    DepthRange::new(0.1, 100.0).unwrap()
}

fn wall_scene() -> SynthScene {
    SynthScene {
        primitives: vec![Primitive::Plane {
            point: Point3::new(0.0, 0.0, 5.0),
            normal: Vector3::new(0.0, 0.0, -1.0),
            patch_half_extent: 50.0,
            color: ColorSpec::Checker { period: 0.5, a: [90, 90, 90], b: [120, 120, 120] },
        }],
    }
}

/// The identity case: an empty MVS cloud and a LiDAR cloud holding one exact
/// scene sample per pixel. The densifier receives a fully valid prompt and
/// the pipeline must return it unchanged.
#[test]
fn curation_identity_fixed_point() {
    let k = Intrinsics::new(120.0, 120.0, 48.0, 32.0, 96, 64).unwrap();
    let cam = Pose::identity();
    let scene = wall_scene();
    let (rgb, depth) = raycast_depth(&scene, &cam, &k, range());
    assert_eq!(depth.valid_count(), depth.len(), "scene must cover the frustum");

    // One lidar point per pixel, in camera(=ego=world) coordinates.
    let lidar = depth_to_cloud(&rgb, &depth, &cam, &k)
        .unwrap()
        .retagged(rgbd_core::cloud::PointSource::Lidar);

    let mut cfg = PipelineConfig::default();
    cfg.curation.lidar_window = 1;
    // Keep every per-pixel sample distinct through the voxel grid.
    cfg.curation.voxel_resolution = 1e-4;

    let lidar_frames = vec![lidar];
    let egos = vec![RelativeTransform::identity()];
    let cameras = vec![(cam, k)];
    let rgbs = vec![rgb];
    let sky = vec![Mask::filled(k.width, k.height, false)];
    let exclude = vec![Mask::filled(k.width, k.height, false)];
    let inputs = CurationInputs {
        lidar_frames: &lidar_frames,
        egos: &egos,
        center: 0,
        mvs: &PointCloud::empty(),
        boxes: &[],
        cameras: &cameras,
        rgb: &rgbs,
        sky_masks: &sky,
        exclude_masks: &exclude,
    };
    let out = curation::curate(&inputs, &cfg, &MedianDensifier).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].valid_count(), depth.len());
    for i in 0..depth.len() {
        assert_eq!(
            out[0].depth_data()[i].to_bits(),
            depth.depth_data()[i].to_bits(),
            "pixel {i} changed"
        );
    }
}

/// Stage errors carry the failing stage's identity.
#[test]
fn curation_errors_name_their_stage() {
    let k = Intrinsics::new(120.0, 120.0, 48.0, 32.0, 96, 64).unwrap();
    let cfg = PipelineConfig::default();
    let lidar_frames = vec![PointCloud::empty()];
    let egos = vec![RelativeTransform::identity()];
    let cameras = vec![(Pose::identity(), k)];
    let rgbs = vec![RgbRaster::filled(k.width, k.height, [0, 0, 0])];
    let sky = vec![Mask::filled(k.width, k.height, false)];
    let exclude = vec![Mask::filled(k.width, k.height, false)];
    let inputs = CurationInputs {
        lidar_frames: &lidar_frames,
        egos: &egos,
        center: 0,
        mvs: &PointCloud::empty(),
        boxes: &[],
        cameras: &cameras,
        rgb: &rgbs,
        sky_masks: &sky,
        exclude_masks: &exclude,
    };
    // Empty cloud -> empty prompt during densification.
    let err = curation::curate(&inputs, &cfg, &MedianDensifier).unwrap_err();
    let msg = err.to_string();
    assert!(msg.starts_with("densify_nn:"), "unexpected error: {msg}");
}

/// External-process protocol: the engine writes rgb.png, prompt.pfm, and
/// prompt_source.png, invokes the command with those paths plus the output
/// path, and reads the resulting PFM back. A constant-depth scene makes the
/// lidar-agreement contract checkable with a canned reply.
#[test]
fn external_densifier_process_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let k = Intrinsics::new(60.0, 60.0, 24.0, 16.0, 48, 32).unwrap();
    let cam = Pose::identity();
    let scene = SynthScene {
        primitives: vec![Primitive::Plane {
            point: Point3::new(0.0, 0.0, 5.0),
            normal: Vector3::new(0.0, 0.0, -1.0),
            patch_half_extent: 50.0,
            color: ColorSpec::Constant([80, 80, 80]),
        }],
    };
    let (rgb, depth) = raycast_depth(&scene, &cam, &k, range());
    // Canned dense reply: the exact wall depth everywhere.
    let reply = dir.path().join("reply.pfm");
    pfm::write(&reply, &depth).unwrap();
    // The "backend" ignores its inputs and copies the canned reply to the
    // requested output path (argv: rgb prompt source out).
    let script = dir.path().join("backend.sh");
    std::fs::write(&script, format!("#!/bin/sh\ncp {} \"$4\"\n", reply.display())).unwrap();
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

    let lidar = depth_to_cloud(&rgb, &depth, &cam, &k)
        .unwrap()
        .retagged(rgbd_core::cloud::PointSource::Lidar);
    let mut cfg = PipelineConfig::default();
    cfg.curation.lidar_window = 1;
    cfg.curation.voxel_resolution = 1e-4;

    let lidar_frames = vec![lidar];
    let egos = vec![RelativeTransform::identity()];
    let cameras = vec![(cam, k)];
    let rgbs = vec![rgb];
    let sky = vec![Mask::filled(k.width, k.height, false)];
    let exclude = vec![Mask::filled(k.width, k.height, false)];
    let inputs = CurationInputs {
        lidar_frames: &lidar_frames,
        egos: &egos,
        center: 0,
        mvs: &PointCloud::empty(),
        boxes: &[],
        cameras: &cameras,
        rgb: &rgbs,
        sky_masks: &sky,
        exclude_masks: &exclude,
    };
    let backend =
        curation::ExternalDensifier::new(vec![script.display().to_string()]);
    let out = curation::curate(&inputs, &cfg, &backend).unwrap();
    assert_eq!(out[0].valid_count(), depth.len());
    assert_eq!(out[0].get(16, 24), 5.0);

    // A failing command surfaces as a backend stage error.
    let failing = curation::ExternalDensifier::new(vec!["false".to_string()]);
    let err = curation::curate(&inputs, &cfg, &failing).unwrap_err();
    assert!(err.to_string().contains("backend"), "unexpected error: {err}");

    // Direct protocol-level check of the written artifacts.
    let probe_dir = tempfile::tempdir().unwrap();
    let probe = probe_dir.path().join("probe.sh");
    let log = probe_dir.path().join("args.txt");
    std::fs::write(
        &probe,
        format!(
            "#!/bin/sh\nprintf '%s\\n' \"$1\" \"$2\" \"$3\" > {}\ncp {} \"$4\"\n",
            log.display(),
            reply.display()
        ),
    )
    .unwrap();
    std::fs::set_permissions(&probe, std::fs::Permissions::from_mode(0o755)).unwrap();
    let probing = curation::ExternalDensifier::new(vec![probe.display().to_string()]);
    curation::curate(&inputs, &cfg, &probing).unwrap();
    let args = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = args.lines().collect();
    assert!(lines[0].ends_with("rgb.png"), "{args}");
    assert!(lines[1].ends_with("prompt.pfm"), "{args}");
    assert!(lines[2].ends_with("prompt_source.png"), "{args}");
}

/// External-process protocol for the view-densifier seam: condition artifacts
/// out, dense RGB-D back.
#[test]
fn external_view_densifier_process_protocol() {
    use rgbd_core::io::png;
    use rgbd_core::nvs::{self, CameraView, RigFrame};
    use std::os::unix::fs::PermissionsExt;

    let dir = tempfile::tempdir().unwrap();
    let k = Intrinsics::new(60.0, 60.0, 24.0, 16.0, 48, 32).unwrap();
    let cam = Pose::identity();
    let scene = wall_scene();
    let (rgb, depth) = raycast_depth(&scene, &cam, &k, range());

    // Canned dense reply: the original frame itself (exact at the identity
    // cycle, so the contract check must pass).
    let reply_rgb = dir.path().join("reply_rgb.png");
    let reply_depth = dir.path().join("reply_depth.pfm");
    png::write_rgb(&reply_rgb, &rgb).unwrap();
    pfm::write(&reply_depth, &depth).unwrap();
    let script = dir.path().join("densify.sh");
    std::fs::write(
        &script,
        format!(
            "#!/bin/sh\ncp {} \"$4\"\ncp {} \"$5\"\n",
            reply_rgb.display(),
            reply_depth.display()
        ),
    )
    .unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

    let frame = RigFrame {
        cameras: vec![CameraView { pose: cam, intrinsics: k, rgb, depth }],
    };
    let densifier = nvs::ExternalViewDensifier::new(vec![script.display().to_string()]);
    let trip = nvs::scc_roundtrip(&frame, &[cam], &densifier, range()).unwrap();
    assert_eq!(trip.pooled.rgb_mae, 0.0);
    assert_eq!(trip.pooled.depth_median_abs_err, 0.0);

    let failing = nvs::ExternalViewDensifier::new(vec!["false".to_string()]);
    let err = nvs::scc_roundtrip(&frame, &[cam], &failing, range()).unwrap_err();
    assert!(matches!(err, nvs::NvsError::DensifierProcess(_)));
}

/// Bundle writer/reader round trip at a small scale, exercising the on-disk
/// layout the CLI tools consume.
#[test]
fn fixture_bundle_supports_curation_and_nvs() {
    use rgbd_core::fixture::{write_bundle, FixtureSpec};
    use rgbd_core::io::bundle::Bundle;

    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        frames: 3,
        width: 160,
        height: 96,
        camera_count: 2,
        lidar_density: 0.4,
        mvs_density: 0.3,
        ..FixtureSpec::default()
    };
    write_bundle(dir.path(), &spec).unwrap();
    let bundle = Bundle::open(dir.path()).unwrap();

    // Curation runs end to end with the default backend.
    let cfg = PipelineConfig::default();
    let loaded = bundle.load_curation_frame(1, cfg.curation.lidar_window).unwrap();
    let out = curation::curate(&loaded.as_inputs(), &cfg, &MedianDensifier).unwrap();
    assert_eq!(out.len(), 2);
    for frame in &out {
        assert_eq!(frame.valid_count(), frame.len(), "curated depth must be dense");
    }

    // NVS conditions project between frames of the same bundle.
    let frames: Vec<_> =
        (0..3).map(|t| bundle.rig_frame(t, spec.depth_range).unwrap()).collect();
    let conds = rgbd_core::nvs::condition_at_offset(&frames, 0, 2, spec.depth_range).unwrap();
    assert_eq!(conds.len(), 2);
    assert!(conds[0].depth.valid_count() > 500);
}
