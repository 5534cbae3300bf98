//! JSON interchange for rigs, trajectories, scene scripts, and synthetic
//! scenes. Poses are 4x4 row-major camera-to-world matrices and every file
//! states its convention explicitly.

use super::IoError;
use crate::cloud::scene_script::{MapRaster, SceneScript, ScriptCamera, ScriptFrame};
use crate::cloud::BBox3D;
use crate::geometry::{Intrinsics, Pose, RelativeTransform};
use crate::nvs::Trajectory;
use crate::synth::{ColorSpec, Primitive, SynthScene};
use base64::Engine;
use nalgebra::{Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONVENTION: &str = "camera_to_world";

/// Row-major 4x4 serialization of a pose, for meta files.
pub fn pose_to_rows(p: &Pose) -> [[f64; 4]; 4] {
    mat_to_rows(&p.to_matrix())
}

fn mat_to_rows(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    let mut rows = [[0.0; 4]; 4];
    for (r, row) in rows.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    rows
}

fn rows_to_mat(rows: &[[f64; 4]; 4]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

fn pose_from_rows(path: &Path, rows: &[[f64; 4]; 4]) -> Result<Pose, IoError> {
    Pose::from_matrix(&rows_to_mat(rows)).map_err(|e| IoError::invalid(path, e.to_string()))
}

fn check_convention(path: &Path, convention: &str) -> Result<(), IoError> {
    if convention != CONVENTION {
        return Err(IoError::invalid(
            path,
            format!("convention '{convention}' unsupported, expected '{CONVENTION}'"),
        ));
    }
    Ok(())
}

#[derive(Serialize, Deserialize, Clone)]
pub struct IntrinsicsJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl IntrinsicsJson {
    fn to_core(&self, path: &Path) -> Result<Intrinsics, IoError> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| IoError::invalid(path, e.to_string()))
    }

    fn from_core(k: &Intrinsics) -> Self {
        Self { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height }
    }
}

/// A named camera: intrinsics plus its mounting pose (camera-to-ego).
#[derive(Debug, Clone)]
pub struct RigCamera {
    pub name: String,
    pub intrinsics: Intrinsics,
    pub mount: Pose,
}

/// Multi-camera rig description.
#[derive(Debug, Clone)]
pub struct CameraRig {
    pub cameras: Vec<RigCamera>,
}

#[derive(Serialize, Deserialize)]
struct RigJson {
    schema: String,
    convention: String,
    cameras: Vec<RigCameraJson>,
}

#[derive(Serialize, Deserialize)]
struct RigCameraJson {
    name: String,
    intrinsics: IntrinsicsJson,
    /// Camera-to-ego mounting transform, row-major 4x4.
    mount: [[f64; 4]; 4],
}

pub fn write_rig(path: &Path, rig: &CameraRig) -> Result<(), IoError> {
    let dto = RigJson {
        schema: "camerarig.v1".into(),
        convention: CONVENTION.into(),
        cameras: rig
            .cameras
            .iter()
            .map(|c| RigCameraJson {
                name: c.name.clone(),
                intrinsics: IntrinsicsJson::from_core(&c.intrinsics),
                mount: mat_to_rows(&c.mount.to_matrix()),
            })
            .collect(),
    };
    write_json(path, &dto)
}

pub fn read_rig(path: &Path) -> Result<CameraRig, IoError> {
    let dto: RigJson = read_json(path)?;
    check_convention(path, &dto.convention)?;
    let mut cameras = Vec::with_capacity(dto.cameras.len());
    for c in &dto.cameras {
        cameras.push(RigCamera {
            name: c.name.clone(),
            intrinsics: c.intrinsics.to_core(path)?,
            mount: pose_from_rows(path, &c.mount)?,
        });
    }
    Ok(CameraRig { cameras })
}

#[derive(Serialize, Deserialize)]
struct TrajectoryJson {
    schema: String,
    convention: String,
    poses: Vec<[[f64; 4]; 4]>,
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let dto = TrajectoryJson {
        schema: "trajectory.v1".into(),
        convention: CONVENTION.into(),
        poses: traj.poses.iter().map(|p| mat_to_rows(&p.to_matrix())).collect(),
    };
    write_json(path, &dto)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    let dto: TrajectoryJson = read_json(path)?;
    check_convention(path, &dto.convention)?;
    let mut poses = Vec::with_capacity(dto.poses.len());
    for rows in &dto.poses {
        poses.push(pose_from_rows(path, rows)?);
    }
    Trajectory::new(poses).map_err(|e| IoError::invalid(path, e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct ScriptJson {
    schema: String,
    convention: String,
    frames: Vec<ScriptFrameJson>,
}

#[derive(Serialize, Deserialize)]
struct ScriptFrameJson {
    index: usize,
    /// Transform from this frame's ego coordinates to frame 0 ("world").
    ego_to_world: [[f64; 4]; 4],
    cameras: Vec<ScriptCameraJson>,
    boxes: Vec<BoxJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    map: Option<MapJson>,
}

#[derive(Serialize, Deserialize)]
struct ScriptCameraJson {
    name: String,
    intrinsics: IntrinsicsJson,
    /// World-frame camera pose, row-major 4x4.
    pose: [[f64; 4]; 4],
}

#[derive(Serialize, Deserialize)]
struct BoxJson {
    class_id: u32,
    corners: [[f64; 3]; 8],
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    width: usize,
    height: usize,
    /// One base64-encoded bit-packed layer per semantic class.
    layers: Vec<String>,
}

fn pack_bits(bits: &[bool]) -> String {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn unpack_bits(path: &Path, s: &str, len: usize) -> Result<Vec<bool>, IoError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(|e| IoError::invalid(path, format!("map layer base64: {e}")))?;
    if bytes.len() != len.div_ceil(8) {
        return Err(IoError::invalid(path, "map layer length mismatch"));
    }
    Ok((0..len).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect())
}

pub fn write_script(path: &Path, script: &SceneScript) -> Result<(), IoError> {
    let frames = script
        .frames
        .iter()
        .map(|f| ScriptFrameJson {
            index: f.index,
            ego_to_world: mat_to_rows(&f.ego_to_world.to_matrix()),
            cameras: f
                .cameras
                .iter()
                .map(|c| ScriptCameraJson {
                    name: c.name.clone(),
                    intrinsics: IntrinsicsJson::from_core(&c.intrinsics),
                    pose: mat_to_rows(&c.pose.to_matrix()),
                })
                .collect(),
            boxes: f
                .boxes
                .iter()
                .map(|b| BoxJson {
                    class_id: b.class_id,
                    corners: {
                        let mut cs = [[0.0; 3]; 8];
                        for (i, c) in b.corners().iter().enumerate() {
                            cs[i] = [c.x, c.y, c.z];
                        }
                        cs
                    },
                })
                .collect(),
            map: f.map.as_ref().map(|m| MapJson {
                width: m.width,
                height: m.height,
                layers: m.layers.iter().map(|l| pack_bits(l)).collect(),
            }),
        })
        .collect();
    write_json(path, &ScriptJson { schema: "scenescript.v1".into(), convention: CONVENTION.into(), frames })
}

pub fn read_script(path: &Path) -> Result<SceneScript, IoError> {
    let dto: ScriptJson = read_json(path)?;
    check_convention(path, &dto.convention)?;
    let mut frames = Vec::with_capacity(dto.frames.len());
    for f in &dto.frames {
        let mut cameras = Vec::with_capacity(f.cameras.len());
        for c in &f.cameras {
            cameras.push(ScriptCamera {
                name: c.name.clone(),
                intrinsics: c.intrinsics.to_core(path)?,
                pose: pose_from_rows(path, &c.pose)?,
            });
        }
        let mut boxes = Vec::with_capacity(f.boxes.len());
        for b in &f.boxes {
            let corners: [Point3<f64>; 8] =
                std::array::from_fn(|i| Point3::new(b.corners[i][0], b.corners[i][1], b.corners[i][2]));
            boxes.push(
                BBox3D::new(corners, b.class_id)
                    .map_err(|e| IoError::invalid(path, e.to_string()))?,
            );
        }
        let map = match &f.map {
            Some(m) => {
                let mut layers = Vec::with_capacity(m.layers.len());
                for layer in &m.layers {
                    layers.push(unpack_bits(path, layer, m.width * m.height)?);
                }
                Some(MapRaster { width: m.width, height: m.height, layers })
            }
            None => None,
        };
        frames.push(ScriptFrame {
            index: f.index,
            ego_to_world: RelativeTransform::from_matrix(&rows_to_mat(&f.ego_to_world))
                .map_err(|e| IoError::invalid(path, e.to_string()))?,
            cameras,
            boxes,
            map,
        });
    }
    let script = SceneScript { frames };
    script.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    Ok(script)
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    schema: String,
    primitives: Vec<PrimitiveJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PrimitiveJson {
    Plane { point: [f64; 3], normal: [f64; 3], patch_half_extent: f64, color: ColorJson },
    Sphere { center: [f64; 3], radius: f64, color: ColorJson },
    Box { min: [f64; 3], max: [f64; 3], color: ColorJson },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ColorJson {
    Constant([u8; 3]),
    Checker { period: f64, a: [u8; 3], b: [u8; 3] },
}

impl From<&ColorSpec> for ColorJson {
    fn from(c: &ColorSpec) -> Self {
        match c {
            ColorSpec::Constant(rgb) => ColorJson::Constant(*rgb),
            ColorSpec::Checker { period, a, b } => {
                ColorJson::Checker { period: *period, a: *a, b: *b }
            }
        }
    }
}

impl From<&ColorJson> for ColorSpec {
    fn from(c: &ColorJson) -> Self {
        match c {
            ColorJson::Constant(rgb) => ColorSpec::Constant(*rgb),
            ColorJson::Checker { period, a, b } => {
                ColorSpec::Checker { period: *period, a: *a, b: *b }
            }
        }
    }
}

fn v3(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn p3(a: &[f64; 3]) -> Point3<f64> {
    Point3::new(a[0], a[1], a[2])
}

pub fn write_scene(path: &Path, scene: &SynthScene) -> Result<(), IoError> {
    let primitives = scene
        .primitives
        .iter()
        .map(|p| match p {
            Primitive::Plane { point, normal, patch_half_extent, color } => PrimitiveJson::Plane {
                point: [point.x, point.y, point.z],
                normal: [normal.x, normal.y, normal.z],
                patch_half_extent: *patch_half_extent,
                color: color.into(),
            },
            Primitive::Sphere { center, radius, color } => PrimitiveJson::Sphere {
                center: [center.x, center.y, center.z],
                radius: *radius,
                color: color.into(),
            },
            Primitive::Box { min, max, color } => PrimitiveJson::Box {
                min: [min.x, min.y, min.z],
                max: [max.x, max.y, max.z],
                color: color.into(),
            },
        })
        .collect();
    write_json(path, &SceneJson { schema: "scene.v1".into(), primitives })
}

pub fn read_scene(path: &Path) -> Result<SynthScene, IoError> {
    let dto: SceneJson = read_json(path)?;
    let primitives = dto
        .primitives
        .iter()
        .map(|p| match p {
            PrimitiveJson::Plane { point, normal, patch_half_extent, color } => Primitive::Plane {
                point: p3(point),
                normal: v3(normal),
                patch_half_extent: *patch_half_extent,
                color: color.into(),
            },
            PrimitiveJson::Sphere { center, radius, color } => Primitive::Sphere {
                center: p3(center),
                radius: *radius,
                color: color.into(),
            },
            PrimitiveJson::Box { min, max, color } => {
                Primitive::Box { min: p3(min), max: p3(max), color: color.into() }
            }
        })
        .collect();
    let scene = SynthScene { primitives };
    scene.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    Ok(scene)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| IoError::Json { path: path.display().to_string(), source: e })?;
    bytes.push(b'\n');
    super::atomic_write(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let bytes = super::read_bytes(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| IoError::Json { path: path.display().to_string(), source: e })
}
