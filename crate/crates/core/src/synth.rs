//! Analytic scene oracle: parametric primitives with exact ray-cast depth and
//! procedural color, used as ground truth for geometric tests and fixtures.
//!
//! Depth is the camera-frame z of the hit (matching `geometry::unproject`),
//! never the Euclidean ray length.

use crate::cloud::{PointCloud, PointSource};
use crate::geometry::{Intrinsics, Pose};
use crate::render::{DepthFrame, DepthRange, RgbRaster};
use crate::seeding;
use nalgebra::{Point3, Unit, Vector3};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

/// Procedural surface color.
#[derive(Debug, Clone, PartialEq)]
pub enum ColorSpec {
    Constant([u8; 3]),
    /// 3D checker over world coordinates with the given period in meters.
    Checker { period: f64, a: [u8; 3], b: [u8; 3] },
}

impl ColorSpec {
    pub fn at(&self, p: &Point3<f64>) -> [u8; 3] {
        match self {
            ColorSpec::Constant(c) => *c,
            ColorSpec::Checker { period, a, b } => {
                let parity = ((p.x / period).floor() + (p.y / period).floor()
                    + (p.z / period).floor()) as i64;
                if parity.rem_euclid(2) == 0 {
                    *a
                } else {
                    *b
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Infinite plane for ray casting; surface sampling covers the square
    /// patch of half-extent `patch_half_extent` around `point`.
    Plane { point: Point3<f64>, normal: Vector3<f64>, patch_half_extent: f64, color: ColorSpec },
    Sphere { center: Point3<f64>, radius: f64, color: ColorSpec },
    /// Axis-aligned box.
    Box { min: Point3<f64>, max: Point3<f64>, color: ColorSpec },
}

impl Primitive {
    pub fn color(&self) -> &ColorSpec {
        match self {
            Primitive::Plane { color, .. } => color,
            Primitive::Sphere { color, .. } => color,
            Primitive::Box { color, .. } => color,
        }
    }
}

/// A list of primitives in world coordinates; everything else is sky.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthScene {
    pub primitives: Vec<Primitive>,
}

fn finite3(v: &Vector3<f64>) -> bool {
    v.x.is_finite() && v.y.is_finite() && v.z.is_finite()
}

impl SynthScene {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (i, prim) in self.primitives.iter().enumerate() {
            match prim {
                Primitive::Plane { point, normal, patch_half_extent, color } => {
                    if !finite3(&point.coords) || !finite3(normal) {
                        return Err(SynthError::InvalidScene(format!("plane {i} not finite")));
                    }
                    if normal.norm() == 0.0 {
                        return Err(SynthError::InvalidScene(format!("plane {i} zero normal")));
                    }
                    if !(*patch_half_extent > 0.0 && patch_half_extent.is_finite()) {
                        return Err(SynthError::InvalidScene(format!("plane {i} bad patch")));
                    }
                    validate_color(color, i)?;
                }
                Primitive::Sphere { center, radius, color } => {
                    if !finite3(&center.coords) || !(*radius > 0.0 && radius.is_finite()) {
                        return Err(SynthError::InvalidScene(format!("sphere {i} invalid")));
                    }
                    validate_color(color, i)?;
                }
                Primitive::Box { min, max, color } => {
                    if !finite3(&min.coords) || !finite3(&max.coords) {
                        return Err(SynthError::InvalidScene(format!("box {i} not finite")));
                    }
                    if !(min.x < max.x && min.y < max.y && min.z < max.z) {
                        return Err(SynthError::InvalidScene(format!("box {i} min !< max")));
                    }
                    validate_color(color, i)?;
                }
            }
        }
        Ok(())
    }
}

fn validate_color(c: &ColorSpec, i: usize) -> Result<(), SynthError> {
    if let ColorSpec::Checker { period, .. } = c {
        if !(*period > 0.0 && period.is_finite()) {
            return Err(SynthError::InvalidScene(format!("primitive {i} bad checker period")));
        }
    }
    Ok(())
}

/// Smallest positive ray parameter hitting the primitive, if any.
/// The ray is `origin + s * dir` with `dir` not necessarily unit length.
fn intersect(prim: &Primitive, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    match prim {
        Primitive::Plane { point, normal, .. } => {
            let denom = normal.dot(dir);
            if denom == 0.0 {
                return None;
            }
            let s = normal.dot(&(point - origin)) / denom;
            (s > 0.0).then_some(s)
        }
        Primitive::Sphere { center, radius, .. } => {
            let oc = origin - center;
            let a = dir.dot(dir);
            let b = 2.0 * dir.dot(&oc);
            let c = oc.dot(&oc) - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let s1 = (-b - sq) / (2.0 * a);
            let s2 = (-b + sq) / (2.0 * a);
            if s1 > 0.0 {
                Some(s1)
            } else if s2 > 0.0 {
                Some(s2)
            } else {
                None
            }
        }
        Primitive::Box { min, max, .. } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            for axis in 0..3 {
                let (o, d, lo, hi) = (origin[axis], dir[axis], min[axis], max[axis]);
                if d == 0.0 {
                    if o < lo || o > hi {
                        return None;
                    }
                    continue;
                }
                let (mut t1, mut t2) = ((lo - o) / d, (hi - o) / d);
                if t1 > t2 {
                    std::mem::swap(&mut t1, &mut t2);
                }
                t_near = t_near.max(t1);
                t_far = t_far.min(t2);
                if t_near > t_far {
                    return None;
                }
            }
            if t_near > 0.0 {
                Some(t_near)
            } else if t_far > 0.0 {
                Some(t_far)
            } else {
                None
            }
        }
    }
}

/// Smallest positive ray parameter over all primitives, if any hit. The ray
/// is `origin + s * dir` with `dir` not necessarily unit length.
pub fn first_hit(scene: &SynthScene, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let mut best: Option<f64> = None;
    for prim in &scene.primitives {
        if let Some(s) = intersect(prim, origin, dir) {
            if best.is_none_or(|b| s < b) {
                best = Some(s);
            }
        }
    }
    best
}

/// Full per-pixel ray-cast output. `hit` records the nearest primitive index
/// regardless of the depth range; the depth frame marks only in-range hits
/// valid.
#[derive(Debug, Clone)]
pub struct RaycastOutput {
    pub rgb: RgbRaster,
    pub depth: DepthFrame,
    pub hit: Vec<Option<usize>>,
}

/// Cast one pinhole ray per pixel and keep the nearest positive hit.
pub fn raycast(scene: &SynthScene, cam: &Pose, k: &Intrinsics, range: DepthRange) -> RaycastOutput {
    let (w, h) = (k.width, k.height);
    let mut rgb = RgbRaster::filled(w, h, [0, 0, 0]);
    let mut depth = DepthFrame::empty(w, h, range);
    let mut hit = vec![None; w * h];
    let origin = cam.center();
    let rot = *cam.rotation();
    for row in 0..h {
        for col in 0..w {
            // dir has camera-frame z = 1, so the ray parameter equals z-depth.
            let dir_cam =
                Vector3::new((col as f64 - k.cx) / k.fx, (row as f64 - k.cy) / k.fy, 1.0);
            let dir = rot * dir_cam;
            let mut best: Option<(f64, usize)> = None;
            for (pi, prim) in scene.primitives.iter().enumerate() {
                if let Some(s) = intersect(prim, &origin, &dir) {
                    if best.is_none_or(|(bs, _)| s < bs) {
                        best = Some((s, pi));
                    }
                }
            }
            if let Some((s, pi)) = best {
                hit[row * w + col] = Some(pi);
                if range.contains(s) {
                    let p = origin + dir * s;
                    depth.set(row, col, s);
                    rgb.set(row, col, scene.primitives[pi].color().at(&p));
                }
            }
        }
    }
    RaycastOutput { rgb, depth, hit }
}

/// Convenience wrapper returning only (rgb, depth).
pub fn raycast_depth(
    scene: &SynthScene,
    cam: &Pose,
    k: &Intrinsics,
    range: DepthRange,
) -> (RgbRaster, DepthFrame) {
    let out = raycast(scene, cam, k, range);
    (out.rgb, out.depth)
}

/// Deterministic orthonormal basis spanning the plane with the given normal.
fn plane_basis(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let n = Unit::new_normalize(*normal);
    let reference = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = Unit::new_normalize(n.cross(&reference));
    let e2 = n.cross(&e1);
    (e1.into_inner(), e2)
}

/// Uniform surface samples at `density` points per square meter, colored by
/// the primitive color functions. Deterministic for a given seed.
pub fn sample_cloud(scene: &SynthScene, density: f64, seed: u64) -> PointCloud {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    for (pi, prim) in scene.primitives.iter().enumerate() {
        let mut rng = seeding::stream_rng(seed, &[seeding::streams::SCENE_SAMPLING, pi as u64]);
        match prim {
            Primitive::Plane { point, normal, patch_half_extent, color } => {
                let (e1, e2) = plane_basis(normal);
                let l = *patch_half_extent;
                let count = (density * (2.0 * l) * (2.0 * l)).floor() as usize;
                for _ in 0..count {
                    let a = rng.gen_range(-l..=l);
                    let b = rng.gen_range(-l..=l);
                    let p = point + e1 * a + e2 * b;
                    positions.push(p);
                    colors.push(color.at(&p));
                }
            }
            Primitive::Sphere { center, radius, color } => {
                let area = 4.0 * std::f64::consts::PI * radius * radius;
                let count = (density * area).floor() as usize;
                for _ in 0..count {
                    let z: f64 = rng.gen_range(-1.0..=1.0);
                    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r_xy = (1.0 - z * z).max(0.0).sqrt();
                    let dir = Vector3::new(r_xy * phi.cos(), r_xy * phi.sin(), z);
                    let p = center + dir * *radius;
                    positions.push(p);
                    colors.push(color.at(&p));
                }
            }
            Primitive::Box { min, max, color } => {
                let ext = max - min;
                // (fixed axis, area) per face pair.
                let faces = [
                    (0usize, ext.y * ext.z),
                    (1usize, ext.x * ext.z),
                    (2usize, ext.x * ext.y),
                ];
                for (axis, area) in faces {
                    for side in 0..2 {
                        let count = (density * area).floor() as usize;
                        for _ in 0..count {
                            let mut p = Point3::new(
                                rng.gen_range(min.x..=max.x),
                                rng.gen_range(min.y..=max.y),
                                rng.gen_range(min.z..=max.z),
                            );
                            p[axis] = if side == 0 { min[axis] } else { max[axis] };
                            positions.push(p);
                            colors.push(color.at(&p));
                        }
                    }
                }
            }
        }
    }
    let n = positions.len();
    PointCloud { positions, colors: Some(colors), labels: None, sources: vec![PointSource::Lidar; n] }
}
