//! Point-cloud container and curation-side cloud operations.

use crate::geometry::{Pose, RelativeTransform};
use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("parallel arrays have mismatched lengths")]
    LengthMismatch,
    #[error("non-finite point coordinate at index {0}")]
    NonFinitePoint(usize),
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("height filter applied to a lidar-tagged cloud")]
    FilterOnWrongSource,
    #[error("voxel resolution must be positive, got {0}")]
    NonPositiveResolution(f64),
    #[error("aggregation window is empty")]
    EmptyWindow,
    #[error("aggregation window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("frame count {frames} does not match ego transform count {egos}")]
    FrameEgoMismatch { frames: usize, egos: usize },
    #[error("center frame {center} out of range for {frames} frames")]
    CenterOutOfRange { center: usize, frames: usize },
}

/// Producer of a point: LiDAR sweep, multi-view-stereo reconstruction, or a
/// back-projected rendered RGB-D frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PointSource {
    Lidar = 0,
    Mvs = 1,
    Rendered = 2,
}

impl PointSource {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(PointSource::Lidar),
            1 => Some(PointSource::Mvs),
            2 => Some(PointSource::Rendered),
            _ => None,
        }
    }
}

/// Colored, labeled, source-tagged 3D points. All parallel arrays share the
/// same length; colors and labels are optional.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Point3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub labels: Option<Vec<u8>>,
    pub sources: Vec<PointSource>,
}

impl PointCloud {
    pub fn new(
        positions: Vec<Point3<f64>>,
        colors: Option<Vec<[u8; 3]>>,
        labels: Option<Vec<u8>>,
        sources: Vec<PointSource>,
    ) -> Result<Self, CloudError> {
        let n = positions.len();
        if sources.len() != n {
            return Err(CloudError::LengthMismatch);
        }
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(CloudError::LengthMismatch);
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(CloudError::LengthMismatch);
            }
        }
        for (i, p) in positions.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(CloudError::NonFinitePoint(i));
            }
        }
        Ok(Self { positions, colors, labels, sources })
    }

    pub fn empty() -> Self {
        Self { positions: Vec::new(), colors: None, labels: None, sources: Vec::new() }
    }

    /// Positions with a uniform source tag and no attributes.
    pub fn from_positions(positions: Vec<Point3<f64>>, source: PointSource) -> Self {
        let sources = vec![source; positions.len()];
        Self { positions, colors: None, labels: None, sources }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Copy with every point retagged to `source`.
    pub fn retagged(&self, source: PointSource) -> Self {
        let mut c = self.clone();
        c.sources = vec![source; c.len()];
        c
    }

    /// Keep the points at the given indices, preserving order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            colors: self.colors.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            sources: indices.iter().map(|&i| self.sources[i]).collect(),
        }
    }

    /// Keep points whose index passes `keep`, preserving order.
    pub fn filter_by(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let indices: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select(&indices)
    }

    /// Append `other`'s points after this cloud's points. Optional attribute
    /// arrays are kept only when present on both sides.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let mut sources = self.sources.clone();
        sources.extend_from_slice(&other.sources);
        let colors = match (&self.colors, &other.colors) {
            (Some(a), Some(b)) => {
                let mut c = a.clone();
                c.extend_from_slice(b);
                Some(c)
            }
            (Some(a), None) if other.is_empty() => Some(a.clone()),
            (None, Some(b)) if self.is_empty() => Some(b.clone()),
            _ => None,
        };
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => {
                let mut l = a.clone();
                l.extend_from_slice(b);
                Some(l)
            }
            (Some(a), None) if other.is_empty() => Some(a.clone()),
            (None, Some(b)) if self.is_empty() => Some(b.clone()),
            _ => None,
        };
        PointCloud { positions, colors, labels, sources }
    }
}

/// Oriented 3D box given by its 8 corners.
///
/// Corner order: index bit 0 selects the first edge, bit 1 the second, bit 2
/// the third, i.e. `corner[i] = corner[0] + b0*e0 + b1*e1 + b2*e2` where
/// `e0 = c1-c0`, `e1 = c2-c0`, `e2 = c4-c0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BBox3D {
    corners: [Point3<f64>; 8],
    pub class_id: u32,
}

const BOX_EDGE_TOL: f64 = 1e-6;

impl BBox3D {
    pub fn new(corners: [Point3<f64>; 8], class_id: u32) -> Result<Self, CloudError> {
        // Parallelepiped check: every edge along one axis must be the same
        // vector, which is equivalent to opposite-face centroids differing by
        // a constant vector.
        let e0 = corners[1] - corners[0];
        let e1 = corners[2] - corners[0];
        let e2 = corners[4] - corners[0];
        for b2 in 0..2usize {
            for b1 in 0..2usize {
                for b0 in 0..2usize {
                    let i = b0 | (b1 << 1) | (b2 << 2);
                    let expect = corners[0]
                        + e0 * b0 as f64
                        + e1 * b1 as f64
                        + e2 * b2 as f64;
                    if (corners[i] - expect).norm() > BOX_EDGE_TOL {
                        return Err(CloudError::DegenerateBox(format!(
                            "corner {i} deviates from parallelepiped by {:.3e}",
                            (corners[i] - expect).norm()
                        )));
                    }
                }
            }
        }
        Ok(Self { corners, class_id })
    }

    /// Axis-aligned box from min/max corners.
    pub fn axis_aligned(min: Point3<f64>, max: Point3<f64>, class_id: u32) -> Self {
        let mut corners = [Point3::origin(); 8];
        for (i, c) in corners.iter_mut().enumerate() {
            c.x = if i & 1 == 0 { min.x } else { max.x };
            c.y = if i & 2 == 0 { min.y } else { max.y };
            c.z = if i & 4 == 0 { min.z } else { max.z };
        }
        Self { corners, class_id }
    }

    /// Oriented box from center, rotation, and full extents.
    pub fn oriented(
        center: Point3<f64>,
        rotation: Matrix3<f64>,
        extents: Vector3<f64>,
        class_id: u32,
    ) -> Self {
        let half = extents / 2.0;
        let mut corners = [Point3::origin(); 8];
        for (i, c) in corners.iter_mut().enumerate() {
            let local = Vector3::new(
                if i & 1 == 0 { -half.x } else { half.x },
                if i & 2 == 0 { -half.y } else { half.y },
                if i & 4 == 0 { -half.z } else { half.z },
            );
            *c = center + rotation * local;
        }
        Self { corners, class_id }
    }

    pub fn corners(&self) -> &[Point3<f64>; 8] {
        &self.corners
    }

    fn edges(&self) -> [Vector3<f64>; 3] {
        [
            self.corners[1] - self.corners[0],
            self.corners[2] - self.corners[0],
            self.corners[4] - self.corners[0],
        ]
    }

    /// Containment test in the box's local axes, with each half-extent
    /// inflated by `margin` meters. Points exactly on the inflated boundary
    /// count as inside.
    pub fn contains(&self, p: &Point3<f64>, margin: f64) -> Result<bool, CloudError> {
        let [e0, e1, e2] = self.edges();
        let (l0, l1, l2) = (e0.norm(), e1.norm(), e2.norm());
        if l0 < BOX_EDGE_TOL || l1 < BOX_EDGE_TOL || l2 < BOX_EDGE_TOL {
            return Err(CloudError::DegenerateBox(format!(
                "edge lengths ({l0:.3e}, {l1:.3e}, {l2:.3e})"
            )));
        }
        let m = Matrix3::from_columns(&[e0, e1, e2]);
        let inv = m.try_inverse().ok_or_else(|| {
            CloudError::DegenerateBox("edge vectors are linearly dependent".into())
        })?;
        // t in [0,1]^3 inside the box; margin converts to per-axis slack.
        let t = inv * (p - self.corners[0]);
        Ok((t.x - 0.5).abs() <= 0.5 + margin / l0
            && (t.y - 0.5).abs() <= 0.5 + margin / l1
            && (t.z - 0.5).abs() <= 0.5 + margin / l2)
    }
}

pub mod scene_script {
    //! Per-frame control signals: semantic map raster, boxes, ego transform,
    //! camera poses. The map raster is carried and serialized but consumed by
    //! nothing in this crate.

    use super::BBox3D;
    use crate::geometry::{Intrinsics, Pose, RelativeTransform};
    use thiserror::Error;

    #[derive(Debug, Error, PartialEq)]
    pub enum ScriptError {
        #[error("frame indices must be contiguous from 0 (frame {0} claims index {1})")]
        NonContiguousFrames(usize, usize),
        #[error("map raster layer size mismatch: expected {expected} bits, got {got}")]
        MapSizeMismatch { expected: usize, got: usize },
    }

    /// Binary semantic raster with `classes` layers of `width*height` bits.
    #[derive(Debug, Clone, PartialEq)]
    pub struct MapRaster {
        pub width: usize,
        pub height: usize,
        /// One bit vector per semantic class, row-major.
        pub layers: Vec<Vec<bool>>,
    }

    impl MapRaster {
        pub fn validate(&self) -> Result<(), ScriptError> {
            let expected = self.width * self.height;
            for layer in &self.layers {
                if layer.len() != expected {
                    return Err(ScriptError::MapSizeMismatch { expected, got: layer.len() });
                }
            }
            Ok(())
        }
    }

    #[derive(Debug, Clone)]
    pub struct ScriptCamera {
        pub name: String,
        pub pose: Pose,
        pub intrinsics: Intrinsics,
    }

    #[derive(Debug, Clone)]
    pub struct ScriptFrame {
        pub index: usize,
        /// Transform from this frame's ego coordinates to frame 0's.
        pub ego_to_world: RelativeTransform,
        pub cameras: Vec<ScriptCamera>,
        /// World-frame boxes active at this frame.
        pub boxes: Vec<BBox3D>,
        pub map: Option<MapRaster>,
    }

    #[derive(Debug, Clone, Default)]
    pub struct SceneScript {
        pub frames: Vec<ScriptFrame>,
    }

    impl SceneScript {
        pub fn validate(&self) -> Result<(), ScriptError> {
            for (i, f) in self.frames.iter().enumerate() {
                if f.index != i {
                    return Err(ScriptError::NonContiguousFrames(i, f.index));
                }
                if let Some(m) = &f.map {
                    m.validate()?;
                }
            }
            Ok(())
        }
    }
}

/// Apply a rigid transform to every position; attributes pass through.
pub fn transform(cloud: &PointCloud, xf: &RelativeTransform) -> PointCloud {
    PointCloud {
        positions: cloud.positions.iter().map(|p| xf.apply(p)).collect(),
        colors: cloud.colors.clone(),
        labels: cloud.labels.clone(),
        sources: cloud.sources.clone(),
    }
}

/// Keep only points strictly outside every box inflated by `margin`.
pub fn remove_dynamic(
    cloud: &PointCloud,
    boxes: &[BBox3D],
    margin: f64,
) -> Result<PointCloud, CloudError> {
    let mut keep = vec![true; cloud.len()];
    for b in boxes {
        for (i, p) in cloud.positions.iter().enumerate() {
            if keep[i] && b.contains(p, margin)? {
                keep[i] = false;
            }
        }
    }
    Ok(cloud.filter_by(|i| keep[i]))
}

/// Keep points with z >= z_min (ego-frame up axis). Intended for MVS clouds;
/// rejects clouds carrying lidar-tagged points.
pub fn filter_above_height(cloud: &PointCloud, z_min: f64) -> Result<PointCloud, CloudError> {
    if cloud.sources.contains(&PointSource::Lidar) {
        return Err(CloudError::FilterOnWrongSource);
    }
    Ok(cloud.filter_by(|i| cloud.positions[i].z >= z_min))
}

fn voxel_key(p: &Point3<f64>, resolution: f64) -> (i64, i64, i64) {
    (
        (p.x / resolution).floor() as i64,
        (p.y / resolution).floor() as i64,
        (p.z / resolution).floor() as i64,
    )
}

/// Voxel-grid downsampling on the axis-aligned grid anchored at the origin.
///
/// Each occupied voxel yields one point: the centroid of its members, carrying
/// the attributes of the member nearest the centroid (ties broken by lowest
/// input index). Output is sorted by ascending (ix, iy, iz).
pub fn voxel_downsample(cloud: &PointCloud, resolution: f64) -> Result<PointCloud, CloudError> {
    if !(resolution > 0.0) {
        return Err(CloudError::NonPositiveResolution(resolution));
    }
    use std::collections::BTreeMap;
    let mut voxels: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        voxels.entry(voxel_key(p, resolution)).or_default().push(i);
    }

    let n = voxels.len();
    let mut positions = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    let mut colors = cloud.colors.as_ref().map(|_| Vec::with_capacity(n));
    let mut labels = cloud.labels.as_ref().map(|_| Vec::with_capacity(n));
    for members in voxels.values() {
        let mut sum = Vector3::zeros();
        for &i in members {
            sum += cloud.positions[i].coords;
        }
        let centroid = Point3::from(sum / members.len() as f64);
        let mut best = members[0];
        let mut best_d2 = (cloud.positions[best] - centroid).norm_squared();
        for &i in &members[1..] {
            let d2 = (cloud.positions[i] - centroid).norm_squared();
            if d2 < best_d2 {
                best = i;
                best_d2 = d2;
            }
        }
        positions.push(centroid);
        sources.push(cloud.sources[best]);
        if let (Some(out), Some(src)) = (colors.as_mut(), cloud.colors.as_ref()) {
            out.push(src[best]);
        }
        if let (Some(out), Some(src)) = (labels.as_mut(), cloud.labels.as_ref()) {
            out.push(src[best]);
        }
    }
    Ok(PointCloud { positions, colors, labels, sources })
}

/// Transform the clouds of an odd window of frames into the center frame and
/// concatenate them. `egos[t]` maps frame-t coordinates into frame 0; the
/// window is clamped at sequence boundaries.
pub fn aggregate_frames(
    clouds: &[PointCloud],
    egos: &[RelativeTransform],
    center: usize,
    window: usize,
) -> Result<PointCloud, CloudError> {
    if window == 0 {
        return Err(CloudError::EmptyWindow);
    }
    if window.is_multiple_of(2) {
        return Err(CloudError::EvenWindow(window));
    }
    if clouds.len() != egos.len() {
        return Err(CloudError::FrameEgoMismatch { frames: clouds.len(), egos: egos.len() });
    }
    if center >= clouds.len() {
        return Err(CloudError::CenterOutOfRange { center, frames: clouds.len() });
    }
    let half = (window - 1) / 2;
    let lo = center.saturating_sub(half);
    let hi = (center + half).min(clouds.len() - 1);
    let to_center_base = egos[center].inverse();
    let mut out = PointCloud::empty();
    for t in lo..=hi {
        let to_center = to_center_base.compose(&egos[t]);
        out = out.concat(&transform(&clouds[t], &to_center));
    }
    Ok(out)
}

/// Ego poses expressed as transforms-to-frame-0 for a list of world poses.
pub fn egos_from_poses(poses: &[Pose]) -> Vec<RelativeTransform> {
    poses.iter().map(RelativeTransform::from_pose).collect()
}
