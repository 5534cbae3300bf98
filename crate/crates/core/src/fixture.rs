//! Synthetic driving-scene fixture: a street of analytic primitives, a
//! six-camera rig on a straight ego trajectory, a moving box as the dynamic
//! object, and a writer that materializes the whole thing as an on-disk
//! bundle (LiDAR/MVS stand-in clouds, RGB renders, analytic depth, masks,
//! script, rig, and scene).
//!
//! World frame: z up, ego drives +x at 1 m/frame, ground at z = 0.

use crate::cloud::scene_script::{MapRaster, SceneScript, ScriptCamera, ScriptFrame};
use crate::cloud::{transform, BBox3D, PointCloud, PointSource};
use crate::geometry::{compose, Intrinsics, Pose, RelativeTransform};
use crate::io::{bundle, json, pfm, ply, png, IoError};
use crate::render::{DepthRange, Mask};
use crate::seeding;
use crate::synth::{sample_cloud, ColorSpec, Primitive, SynthScene};
use nalgebra::{Matrix3, Point3, Vector3};

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub camera_count: usize,
    /// Static-surface sample density for the LiDAR stand-in, points per m^2.
    pub lidar_density: f64,
    /// Static-surface sample density for the MVS stand-in, points per m^2.
    pub mvs_density: f64,
    pub seed: u64,
    pub depth_range: DepthRange,
    pub sky_depth: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            frames: 17,
            width: 800,
            height: 424,
            camera_count: 6,
            lidar_density: 0.5,
            mvs_density: 0.4,
            seed: 0,
            depth_range: DepthRange::new(0.1, 100.0).unwrap(),
            sky_depth: 100.0,
        }
    }
}

/// Large street surfaces: ground plane, two building rows, an end wall.
fn base_primitives() -> Vec<Primitive> {
    let gray = |a: u8, b: u8| ColorSpec::Checker { period: 1.0, a: [a; 3], b: [b; 3] };
    vec![
        Primitive::Plane {
            point: Point3::new(0.0, 0.0, 0.0),
            normal: Vector3::new(0.0, 0.0, 1.0),
            patch_half_extent: 80.0,
            color: gray(95, 110),
        },
        Primitive::Box {
            min: Point3::new(-40.0, 8.0, 0.0),
            max: Point3::new(60.0, 14.0, 7.0),
            color: ColorSpec::Checker { period: 2.0, a: [140, 110, 90], b: [120, 95, 80] },
        },
        Primitive::Box {
            min: Point3::new(-40.0, -14.0, 0.0),
            max: Point3::new(60.0, -8.0, 5.0),
            color: ColorSpec::Checker { period: 2.0, a: [90, 110, 140], b: [80, 95, 120] },
        },
        Primitive::Box {
            min: Point3::new(70.0, -20.0, 0.0),
            max: Point3::new(72.0, 20.0, 12.0),
            color: gray(150, 130),
        },
    ]
}

/// Small street furniture. Sampled much denser than the base surfaces so the
/// stand-in clouds actually contain these occluders.
fn furniture_primitives() -> Vec<Primitive> {
    vec![
        Primitive::Sphere {
            center: Point3::new(12.0, 2.0, 1.2),
            radius: 0.8,
            color: ColorSpec::Constant([180, 40, 40]),
        },
        Primitive::Box {
            min: Point3::new(20.0, -2.3, 0.0),
            max: Point3::new(20.6, -1.7, 3.0),
            color: ColorSpec::Constant([40, 160, 60]),
        },
        Primitive::Sphere {
            center: Point3::new(30.0, -3.0, 1.0),
            radius: 1.0,
            color: ColorSpec::Constant([200, 170, 40]),
        },
    ]
}

/// Density multiplier for the small furniture primitives.
const FURNITURE_DENSITY_FACTOR: f64 = 80.0;

/// Static street scene: ground plane, two building rows, an end wall, and
/// some street furniture.
pub fn street_scene() -> SynthScene {
    let mut primitives = base_primitives();
    primitives.extend(furniture_primitives());
    SynthScene { primitives }
}

/// The moving box (an oncoming vehicle) at frame t; world frame.
pub fn dynamic_box_at(t: usize) -> (Point3<f64>, Point3<f64>) {
    let cx = 34.0 - 1.5 * t as f64;
    (Point3::new(cx - 2.0, -4.5, 0.0), Point3::new(cx + 2.0, -2.5, 1.6))
}

pub fn ego_pose(t: usize) -> Pose {
    Pose::new(Matrix3::identity(), Vector3::new(t as f64, 0.0, 0.0)).unwrap()
}

const CAMERA_DEFS: [(&str, f64, [f64; 3]); 6] = [
    ("front", 0.0, [1.5, 0.0, 1.6]),
    ("front_left", 55.0, [0.6, 0.5, 1.6]),
    ("front_right", -55.0, [0.6, -0.5, 1.6]),
    ("back", 180.0, [-1.0, 0.0, 1.6]),
    ("back_left", 125.0, [-0.4, 0.5, 1.6]),
    ("back_right", -125.0, [-0.4, -0.5, 1.6]),
];

/// Camera-to-ego mounting pose for a horizontal camera with the given yaw
/// (degrees; 0 = ego forward +x). Image u points to the driver's right,
/// v points down.
pub fn mount_pose(yaw_deg: f64, offset: [f64; 3]) -> Pose {
    let yaw = yaw_deg.to_radians();
    let view = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let rot = Matrix3::from_columns(&[right, down, view]);
    Pose::new(rot, Vector3::new(offset[0], offset[1], offset[2])).unwrap()
}

pub fn build_rig(spec: &FixtureSpec) -> json::CameraRig {
    assert!(spec.camera_count >= 1 && spec.camera_count <= CAMERA_DEFS.len());
    let k = Intrinsics::new(
        500.0,
        500.0,
        spec.width as f64 / 2.0,
        spec.height as f64 / 2.0,
        spec.width,
        spec.height,
    )
    .unwrap();
    let cameras = CAMERA_DEFS[..spec.camera_count]
        .iter()
        .map(|(name, yaw, offset)| json::RigCamera {
            name: (*name).to_string(),
            intrinsics: k,
            mount: mount_pose(*yaw, *offset),
        })
        .collect();
    json::CameraRig { cameras }
}

pub fn build_script(spec: &FixtureSpec, rig: &json::CameraRig) -> SceneScript {
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let ego = ego_pose(t);
        let cameras = rig
            .cameras
            .iter()
            .map(|c| ScriptCamera {
                name: c.name.clone(),
                intrinsics: c.intrinsics,
                pose: compose(&ego, &c.mount),
            })
            .collect();
        let (bmin, bmax) = dynamic_box_at(t);
        frames.push(ScriptFrame {
            index: t,
            ego_to_world: RelativeTransform::from_pose(&ego),
            cameras,
            boxes: vec![BBox3D::axis_aligned(bmin, bmax, 1)],
            map: Some(demo_map(t)),
        });
    }
    SceneScript { frames }
}

/// Small BEV occupancy raster carried through the script (drivable band plus
/// a crossing stripe that advances with the frame index).
fn demo_map(t: usize) -> MapRaster {
    let (w, h) = (64usize, 64usize);
    let mut drivable = vec![false; w * h];
    let mut crossing = vec![false; w * h];
    for row in 0..h {
        for col in 0..w {
            // Rows map to lateral y in [-16, 16); the street is |y| < 8.
            let y = row as f64 - 32.0;
            if y.abs() < 16.0 {
                drivable[row * w + col] = true;
            }
            if (col + t) % 20 < 2 {
                crossing[row * w + col] = true;
            }
        }
    }
    MapRaster { width: w, height: h, layers: vec![drivable, crossing] }
}

/// Color used for dynamic-object boxes, both when rendering fixture images
/// and when reconstructing analytic scenes from script boxes.
pub const DYNAMIC_BOX_COLOR: [u8; 3] = [30, 30, 200];

fn dynamic_primitive(t: usize) -> Primitive {
    let (bmin, bmax) = dynamic_box_at(t);
    Primitive::Box { min: bmin, max: bmax, color: ColorSpec::Constant(DYNAMIC_BOX_COLOR) }
}

/// Convert axis-aligned script boxes into analytic box primitives (used to
/// augment a static scene with the dynamic objects of one frame). Boxes that
/// are not axis-aligned are skipped.
pub fn script_box_primitives(boxes: &[BBox3D]) -> Vec<Primitive> {
    let mut out = Vec::new();
    for b in boxes {
        let corners = b.corners();
        let mut min = corners[0];
        let mut max = corners[0];
        for c in corners.iter() {
            for a in 0..3 {
                min[a] = min[a].min(c[a]);
                max[a] = max[a].max(c[a]);
            }
        }
        let reference = BBox3D::axis_aligned(min, max, b.class_id);
        let aligned = corners
            .iter()
            .zip(reference.corners())
            .all(|(a, e)| (a - e).norm() < 1e-9);
        if aligned && min.x < max.x && min.y < max.y && min.z < max.z {
            out.push(Primitive::Box { min, max, color: ColorSpec::Constant(DYNAMIC_BOX_COLOR) });
        }
    }
    out
}

/// Scene groups with density multipliers, so small primitives can be sampled
/// densely enough to act as occluders.
pub struct SamplingPlan {
    pub groups: Vec<(SynthScene, f64)>,
}

impl SamplingPlan {
    pub fn for_street() -> Self {
        Self {
            groups: vec![
                (SynthScene { primitives: base_primitives() }, 1.0),
                (
                    SynthScene { primitives: furniture_primitives() },
                    FURNITURE_DENSITY_FACTOR,
                ),
            ],
        }
    }

    pub fn uniform(scene: &SynthScene) -> Self {
        Self { groups: vec![(scene.clone(), 1.0)] }
    }

    fn sample(&self, density: f64, seed: u64) -> PointCloud {
        let mut out = PointCloud::empty();
        for (gi, (scene, factor)) in self.groups.iter().enumerate() {
            out = out.concat(&sample_cloud(
                scene,
                density * factor,
                seeding::derive_seed(seed, &[gi as u64]),
            ));
        }
        out
    }
}

/// Sensor origin used for visibility filtering at frame t (roof LiDAR).
fn sensor_origin(t: usize) -> Point3<f64> {
    let ego = ego_pose(t);
    ego.to_world(&Point3::new(0.0, 0.0, 1.8))
}

/// True when `p` is the first surface hit along the ray from `origin`.
fn visible_from(scene: &SynthScene, origin: &Point3<f64>, p: &Point3<f64>) -> bool {
    let dir = p - origin;
    match crate::synth::first_hit(scene, origin, &dir) {
        // The ray reaches p at parameter 1; anything clearly before it
        // occludes. Grazing self-hits within tolerance count as visible.
        Some(s) => s > 1.0 - 1e-6,
        None => true,
    }
}

/// Keep only points visible from at least one of the given origins. This is
/// what makes the stand-in clouds behave like sensor data: back faces and
/// interior surfaces never show up.
fn visibility_filter(
    cloud: &PointCloud,
    occluders: &SynthScene,
    origins: &[Point3<f64>],
) -> PointCloud {
    cloud.filter_by(|i| {
        origins
            .iter()
            .any(|o| visible_from(occluders, o, &cloud.positions[i]))
    })
}

/// LiDAR stand-in for frame t: surface samples visible from the frame-t
/// sensor, plus dynamic-box samples; in frame-t ego coordinates.
pub fn lidar_cloud(spec: &FixtureSpec, scene: &SynthScene, plan: &SamplingPlan, t: usize) -> PointCloud {
    let static_part =
        plan.sample(spec.lidar_density, seeding::derive_seed(spec.seed, &[10, t as u64]));
    let dyn_prim = dynamic_primitive(t);
    let dyn_scene = SynthScene { primitives: vec![dyn_prim.clone()] };
    let dyn_part = sample_cloud(
        &dyn_scene,
        spec.lidar_density * 8.0,
        seeding::derive_seed(spec.seed, &[11, t as u64]),
    );
    let mut occluders = scene.clone();
    occluders.primitives.push(dyn_prim);
    let origin = [sensor_origin(t)];
    let world = visibility_filter(&static_part.concat(&dyn_part), &occluders, &origin);
    let to_ego = RelativeTransform::from_pose(&ego_pose(t)).inverse();
    transform(&world, &to_ego)
}

/// MVS stand-in for frame t: static samples tagged `mvs` and visible from at
/// least one trajectory position (multi-view reconstruction sees past single
/// frames), low-altitude noise (removed by the height filter), and
/// dynamic-box samples (removed by the exclusion masks); frame-t ego
/// coordinates.
pub fn mvs_cloud(spec: &FixtureSpec, scene: &SynthScene, plan: &SamplingPlan, t: usize) -> PointCloud {
    let static_raw = plan
        .sample(spec.mvs_density, seeding::derive_seed(spec.seed, &[20, t as u64]))
        .retagged(PointSource::Mvs);
    let origins: Vec<Point3<f64>> =
        (0..spec.frames).step_by(3).map(sensor_origin).collect();
    let static_part = visibility_filter(&static_raw, scene, &origins);

    let mut rng = seeding::stream_rng(spec.seed, &[21, t as u64]);
    use rand::Rng;
    let mut noise_pos = Vec::with_capacity(400);
    for _ in 0..400 {
        noise_pos.push(Point3::new(
            rng.gen_range(-20.0..40.0),
            rng.gen_range(-7.0..7.0),
            rng.gen_range(-0.5..1.0),
        ));
    }
    let noise = PointCloud::from_positions(noise_pos, PointSource::Mvs);

    let dyn_scene = SynthScene { primitives: vec![dynamic_primitive(t)] };
    let dyn_part = sample_cloud(
        &dyn_scene,
        spec.mvs_density * 8.0,
        seeding::derive_seed(spec.seed, &[22, t as u64]),
    )
    .retagged(PointSource::Mvs);

    let world = static_part.concat(&noise).concat(&dyn_part);
    let to_ego = RelativeTransform::from_pose(&ego_pose(t)).inverse();
    transform(&world, &to_ego)
}

/// Write the full bundle for this fixture with the default street scene.
pub fn write_bundle(root: &std::path::Path, spec: &FixtureSpec) -> Result<(), IoError> {
    write_bundle_inner(root, spec, &street_scene(), &SamplingPlan::for_street())
}

/// Write the full bundle using a caller-provided static scene, sampled
/// uniformly.
pub fn write_bundle_with_scene(
    root: &std::path::Path,
    spec: &FixtureSpec,
    scene: &SynthScene,
) -> Result<(), IoError> {
    write_bundle_inner(root, spec, scene, &SamplingPlan::uniform(scene))
}

fn write_bundle_inner(
    root: &std::path::Path,
    spec: &FixtureSpec,
    scene: &SynthScene,
    plan: &SamplingPlan,
) -> Result<(), IoError> {
    let rig = build_rig(spec);
    let script = build_script(spec, &rig);
    json::write_rig(&root.join("rig.json"), &rig)?;
    json::write_script(&root.join("script.json"), &script)?;
    json::write_scene(&root.join("scene.json"), scene)?;
    let traj = crate::nvs::Trajectory::new((0..spec.frames).map(ego_pose).collect())
        .expect("frames >= 1");
    json::write_trajectory(&root.join("trajectory.json"), &traj)?;

    for t in 0..spec.frames {
        write_frame(root, spec, scene, plan, &script, t)?;
    }
    Ok(())
}

/// Write one frame of the bundle (clouds, renders, masks).
pub fn write_frame(
    root: &std::path::Path,
    spec: &FixtureSpec,
    scene: &SynthScene,
    plan: &SamplingPlan,
    script: &SceneScript,
    t: usize,
) -> Result<(), IoError> {
    let fdir = bundle::frame_dir(root, t);
    ply::write(&fdir.join("lidar.ply"), &lidar_cloud(spec, scene, plan, t))?;
    ply::write(&fdir.join("mvs.ply"), &mvs_cloud(spec, scene, plan, t))?;

    // Scene including the dynamic box, for images and exclusion masks.
    let mut full_scene = scene.clone();
    full_scene.primitives.push(dynamic_primitive(t));
    let dyn_index = full_scene.primitives.len() - 1;

    for cam in &script.frames[t].cameras {
        let cdir = bundle::camera_dir(root, t, &cam.name);
        let full = crate::synth::raycast(&full_scene, &cam.pose, &cam.intrinsics, spec.depth_range);
        let static_out =
            crate::synth::raycast(scene, &cam.pose, &cam.intrinsics, spec.depth_range);

        // Captured image and dense depth come from the full scene (the
        // dynamic object is visible in them).
        png::write_rgb(&cdir.join("rgb.png"), &full.rgb)?;
        pfm::write(&cdir.join("depth.pfm"), &full.depth)?;

        // Sky mask: static-scene rays that hit nothing in range.
        let sky_bits: Vec<bool> =
            static_out.depth.valid_data().iter().map(|v| !v).collect();
        png::write_mask(
            &cdir.join("sky.png"),
            &Mask { width: spec.width, height: spec.height, bits: sky_bits },
        )?;

        // Exclusion mask: dynamic-object pixels plus sky.
        let excl_bits: Vec<bool> = full
            .hit
            .iter()
            .zip(full.depth.valid_data())
            .map(|(hit, valid)| *hit == Some(dyn_index) || !valid)
            .collect();
        png::write_mask(
            &cdir.join("exclude.png"),
            &Mask { width: spec.width, height: spec.height, bits: excl_bits },
        )?;
    }
    Ok(())
}
