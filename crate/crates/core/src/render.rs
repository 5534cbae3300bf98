//! Point-cloud rendering into camera views: z-buffer splatting, depth
//! back-projection, and Katz-style hidden-point removal.

use crate::cloud::{PointCloud, PointSource};
use crate::geometry::{self, Intrinsics, Pose};
use crate::hull::{convex_hull_3d, HullError};
use nalgebra::{Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("raster size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("invalid depth range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("depth value {value} at pixel {index} outside range and nonzero")]
    InvalidDepthValue { index: usize, value: f64 },
    #[error("cloud is empty")]
    EmptyCloud,
    #[error("point {0} coincides with the viewpoint")]
    PointAtViewpoint(usize),
    #[error("cloud is degenerate for hidden-point removal (collinear or coplanar through the viewpoint)")]
    DegenerateCloud,
    #[error("hull failure: {0}")]
    Hull(HullError),
}

/// Valid metric depth interval in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    pub fn new(min: f64, max: f64) -> Result<Self, RenderError> {
        if !(min > 0.0 && min < max && max.is_finite()) {
            return Err(RenderError::InvalidRange(min, max));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.min && d <= self.max
    }
}

/// Metric depth raster. `0` marks invalid pixels; a pixel is valid iff its
/// depth lies inside `range`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
    range: DepthRange,
}

impl DepthFrame {
    /// All-invalid frame.
    pub fn empty(width: usize, height: usize, range: DepthRange) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            valid: vec![false; width * height],
            range,
        }
    }

    /// Build from a raw raster where every entry is either 0 (invalid) or a
    /// value inside `range`; anything else is an error.
    pub fn from_raw(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        range: DepthRange,
    ) -> Result<Self, RenderError> {
        assert_eq!(depth.len(), width * height, "raster length mismatch");
        let mut valid = vec![false; depth.len()];
        for (i, &d) in depth.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            if !range.contains(d) {
                return Err(RenderError::InvalidDepthValue { index: i, value: d });
            }
            valid[i] = true;
        }
        Ok(Self { width, height, depth, valid, range })
    }

    /// Build from a raw raster, zeroing out-of-range entries instead of
    /// failing. Used when ingesting depth files that carry no range metadata.
    pub fn from_raw_sanitized(
        width: usize,
        height: usize,
        mut depth: Vec<f64>,
        range: DepthRange,
    ) -> Self {
        assert_eq!(depth.len(), width * height, "raster length mismatch");
        let mut valid = vec![false; depth.len()];
        for (i, d) in depth.iter_mut().enumerate() {
            if range.contains(*d) {
                valid[i] = true;
            } else {
                *d = 0.0;
            }
        }
        Self { width, height, depth, valid, range }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn range(&self) -> DepthRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn depth_data(&self) -> &[f64] {
        &self.depth
    }

    pub fn valid_data(&self) -> &[bool] {
        &self.valid
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.depth[self.index(row, col)]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[self.index(row, col)]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Set a pixel to a depth inside the frame range.
    pub fn set(&mut self, row: usize, col: usize, d: f64) {
        debug_assert!(self.range.contains(d), "depth {d} outside frame range");
        let i = self.index(row, col);
        self.depth[i] = d;
        self.valid[i] = true;
    }

    pub fn clear(&mut self, row: usize, col: usize) {
        let i = self.index(row, col);
        self.depth[i] = 0.0;
        self.valid[i] = false;
    }
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbRaster {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self { width, height, data: vec![color; width * height] }
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, c: [u8; 3]) {
        self.data[row * self.width + col] = c;
    }
}

/// Binary raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, bits: vec![value; width * height] }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Sparse projected RGB + depth + shared valid mask: the conditioning input
/// for a novel-view synthesizer. RGB content is meaningful only where the
/// depth frame is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionFrame {
    pub rgb: RgbRaster,
    pub depth: DepthFrame,
}

impl ConditionFrame {
    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn valid(&self) -> &[bool] {
        self.depth.valid_data()
    }
}

/// Z-ties closer than this are broken by input index.
pub const SPLAT_TIE_EPS: f64 = 1e-9;

/// Splat a world-frame cloud into a camera view with a one-pixel footprint.
///
/// Points project to their nearest pixel; per pixel the smallest camera-frame
/// z wins, with ties (|dz| < 1e-9) going to the lowest input index.
/// Out-of-frustum and out-of-range points are dropped silently.
pub fn splat(cloud: &PointCloud, cam: &Pose, k: &Intrinsics, range: DepthRange) -> ConditionFrame {
    let (w, h) = (k.width, k.height);
    let mut zmin = vec![f64::INFINITY; w * h];
    let mut projected: Vec<(usize, f64, f64, f64)> = Vec::new(); // (pixel, z)

    let rot_t = cam.rotation().transpose();
    let t = *cam.translation();
    for (i, p) in cloud.positions.iter().enumerate() {
        let pc = rot_t * (p.coords - t);
        let z = pc.z;
        if !(z >= range.min && z <= range.max) {
            continue;
        }
        let u = k.fx * pc.x / z + k.cx;
        let v = k.fy * pc.y / z + k.cy;
        let (pu, pv) = (u.round(), v.round());
        if pu < 0.0 || pv < 0.0 || pu >= w as f64 || pv >= h as f64 {
            continue;
        }
        let pix = pv as usize * w + pu as usize;
        if z < zmin[pix] {
            zmin[pix] = z;
        }
        projected.push((i, pu, pv, z));
    }

    let mut depth = DepthFrame::empty(w, h, range);
    let mut rgb = RgbRaster::filled(w, h, [0, 0, 0]);
    let mut claimed = vec![false; w * h];
    for &(i, pu, pv, z) in &projected {
        let pix = pv as usize * w + pu as usize;
        if claimed[pix] {
            continue;
        }
        if z < zmin[pix] + SPLAT_TIE_EPS {
            claimed[pix] = true;
            depth.set(pv as usize, pu as usize, z);
            if let Some(colors) = &cloud.colors {
                rgb.data[pix] = colors[i];
            }
        }
    }
    ConditionFrame { rgb, depth }
}

/// Back-project every valid pixel into a world-frame point carrying the
/// pixel's color; points are emitted in row-major order and tagged `rendered`.
pub fn depth_to_cloud(
    rgb: &RgbRaster,
    depth: &DepthFrame,
    cam: &Pose,
    k: &Intrinsics,
) -> Result<PointCloud, RenderError> {
    if rgb.width != depth.width() || rgb.height != depth.height() {
        return Err(RenderError::SizeMismatch(rgb.width, rgb.height, depth.width(), depth.height()));
    }
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            if !depth.is_valid(row, col) {
                continue;
            }
            let d = depth.get(row, col);
            let pc = geometry::unproject(col as f64, row as f64, d, k)
                .expect("valid pixels have positive depth");
            positions.push(cam.to_world(&pc));
            colors.push(rgb.get(row, col));
        }
    }
    let n = positions.len();
    Ok(PointCloud {
        positions,
        colors: Some(colors),
        labels: None,
        sources: vec![PointSource::Rendered; n],
    })
}

/// Hidden-point removal by spherical flipping (radius `10^gamma * max ||p||`)
/// and convex-hull membership. Returns the sorted indices of visible points.
///
/// Clouds of up to three points are reported fully visible; larger clouds that
/// are collinear or coplanar with the viewpoint are rejected as degenerate.
pub fn hidden_point_removal(
    cloud: &PointCloud,
    viewpoint: &Point3<f64>,
    radius_exponent: f64,
) -> Result<Vec<usize>, RenderError> {
    if cloud.is_empty() {
        return Err(RenderError::EmptyCloud);
    }
    let mut rel: Vec<Vector3<f64>> = Vec::with_capacity(cloud.len());
    let mut max_norm = 0.0f64;
    for (i, p) in cloud.positions.iter().enumerate() {
        let v = p - viewpoint;
        let n = v.norm();
        if n == 0.0 {
            return Err(RenderError::PointAtViewpoint(i));
        }
        max_norm = max_norm.max(n);
        rel.push(v);
    }
    if cloud.len() <= 3 {
        return Ok((0..cloud.len()).collect());
    }

    let radius = 10f64.powf(radius_exponent) * max_norm;
    let mut flipped: Vec<Point3<f64>> = rel
        .iter()
        .map(|v| {
            let n = v.norm();
            Point3::from(v * (2.0 * radius / n - 1.0))
        })
        .collect();
    flipped.push(Point3::origin()); // the viewpoint itself

    let hull = convex_hull_3d(&flipped).map_err(|e| match e {
        HullError::Degenerate => RenderError::DegenerateCloud,
        other => RenderError::Hull(other),
    })?;
    Ok(hull
        .vertex_indices
        .into_iter()
        .filter(|&i| i < cloud.len())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointSource;
    use nalgebra::Matrix3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn k64() -> Intrinsics {
        Intrinsics::new(80.0, 80.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn range() -> DepthRange {
        DepthRange::new(0.1, 100.0).unwrap()
    }

    #[test]
    fn splat_empty_cloud_is_all_invalid() {
        let f = splat(&PointCloud::empty(), &Pose::identity(), &k64(), range());
        assert_eq!(f.depth.valid_count(), 0);
        assert!(f.depth.depth_data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn splat_zbuffers_points_on_one_ray() {
        let positions = vec![Point3::new(0.0, 0.0, 5.0), Point3::new(0.0, 0.0, 2.0)];
        let colors = vec![[10, 0, 0], [0, 20, 0]];
        let cloud = PointCloud::new(
            positions,
            Some(colors),
            None,
            vec![PointSource::Lidar; 2],
        )
        .unwrap();
        let f = splat(&cloud, &Pose::identity(), &k64(), range());
        assert_eq!(f.depth.get(32, 32), 2.0);
        assert_eq!(f.rgb.get(32, 32), [0, 20, 0]);
        assert_eq!(f.depth.valid_count(), 1);
    }

    #[test]
    fn splat_tie_goes_to_lowest_index() {
        let positions = vec![Point3::new(0.0, 0.0, 2.0), Point3::new(0.0, 0.0, 2.0 - 1e-10)];
        let colors = vec![[1, 1, 1], [2, 2, 2]];
        let cloud =
            PointCloud::new(positions, Some(colors), None, vec![PointSource::Lidar; 2]).unwrap();
        let f = splat(&cloud, &Pose::identity(), &k64(), range());
        assert_eq!(f.rgb.get(32, 32), [1, 1, 1]);
        assert_eq!(f.depth.get(32, 32), 2.0);
    }

    #[test]
    fn splat_drops_out_of_range_and_behind() {
        let cloud = PointCloud::from_positions(
            vec![
                Point3::new(0.0, 0.0, -3.0),
                Point3::new(0.0, 0.0, 0.05),
                Point3::new(0.0, 0.0, 101.0),
                Point3::new(50.0, 0.0, 1.0), // projects far outside the raster
            ],
            PointSource::Lidar,
        );
        let f = splat(&cloud, &Pose::identity(), &k64(), range());
        assert_eq!(f.depth.valid_count(), 0);
    }

    #[test]
    fn splat_matches_bruteforce_zbuffer() {
        // Independent per-pixel recomputation with inline pinhole arithmetic.
        let mut rng = StdRng::seed_from_u64(99);
        let k = k64();
        let r = range();
        for _ in 0..5 {
            let n = 2000;
            let positions: Vec<Point3<f64>> = (0..n)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-3.0..3.0),
                        rng.gen_range(-1.0..8.0),
                    )
                })
                .collect();
            let colors: Vec<[u8; 3]> =
                (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
            let cloud = PointCloud::new(
                positions.clone(),
                Some(colors.clone()),
                None,
                vec![PointSource::Lidar; n],
            )
            .unwrap();
            let f = splat(&cloud, &Pose::identity(), &k, r);

            for row in 0..k.height {
                for col in 0..k.width {
                    let mut zmin = f64::INFINITY;
                    for p in &positions {
                        if p.z < r.min || p.z > r.max {
                            continue;
                        }
                        let u = (k.fx * p.x / p.z + k.cx).round();
                        let v = (k.fy * p.y / p.z + k.cy).round();
                        if u == col as f64 && v == row as f64 && p.z < zmin {
                            zmin = p.z;
                        }
                    }
                    if zmin.is_infinite() {
                        assert!(!f.depth.is_valid(row, col));
                        continue;
                    }
                    let mut winner = None;
                    for (i, p) in positions.iter().enumerate() {
                        if p.z < r.min || p.z > r.max {
                            continue;
                        }
                        let u = (k.fx * p.x / p.z + k.cx).round();
                        let v = (k.fy * p.y / p.z + k.cy).round();
                        if u == col as f64 && v == row as f64 && p.z < zmin + SPLAT_TIE_EPS {
                            winner = Some(i);
                            break;
                        }
                    }
                    let i = winner.unwrap();
                    assert!(f.depth.is_valid(row, col));
                    assert_eq!(f.depth.get(row, col).to_bits(), positions[i].z.to_bits());
                    assert_eq!(f.rgb.get(row, col), colors[i]);
                }
            }
        }
    }

    #[test]
    fn depth_to_cloud_empty_depth_gives_empty_cloud() {
        let k = k64();
        let depth = DepthFrame::empty(k.width, k.height, range());
        let rgb = RgbRaster::filled(k.width, k.height, [0, 0, 0]);
        let c = depth_to_cloud(&rgb, &depth, &Pose::identity(), &k).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn depth_to_cloud_single_pixel_on_axis() {
        let k = Intrinsics::new(500.0, 500.0, 320.0, 180.0, 640, 360).unwrap();
        let mut depth = DepthFrame::empty(640, 360, range());
        depth.set(180, 320, 5.0);
        let rgb = RgbRaster::filled(640, 360, [7, 8, 9]);
        let cam = Pose::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let c = depth_to_cloud(&rgb, &depth, &cam, &k).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.positions[0], Point3::new(1.0, 2.0, 8.0));
        assert_eq!(c.colors.as_ref().unwrap()[0], [7, 8, 9]);
        assert_eq!(c.sources[0], PointSource::Rendered);
    }

    #[test]
    fn depth_to_cloud_rejects_size_mismatch() {
        let depth = DepthFrame::empty(4, 4, range());
        let rgb = RgbRaster::filled(5, 4, [0, 0, 0]);
        assert!(matches!(
            depth_to_cloud(&rgb, &depth, &Pose::identity(), &k64()),
            Err(RenderError::SizeMismatch(..))
        ));
    }

    #[test]
    fn splat_of_backprojection_is_fixed_point() {
        // A splatted frame back-projected and re-splatted at the same view
        // reproduces itself bit-exactly on valid pixels.
        let mut rng = StdRng::seed_from_u64(123);
        let k = k64();
        let n = 3000;
        let positions: Vec<Point3<f64>> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(1.0..9.0),
                )
            })
            .collect();
        let colors: Vec<[u8; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let cloud =
            PointCloud::new(positions, Some(colors), None, vec![PointSource::Mvs; n]).unwrap();
        let cam = Pose::identity();
        let f1 = splat(&cloud, &cam, &k, range());
        let back = depth_to_cloud(&f1.rgb, &f1.depth, &cam, &k).unwrap();
        let f2 = splat(&back, &cam, &k, range());
        assert_eq!(f1.depth.valid_data(), f2.depth.valid_data());
        for i in 0..f1.depth.len() {
            if f1.depth.valid_data()[i] {
                assert_eq!(
                    f1.depth.depth_data()[i].to_bits(),
                    f2.depth.depth_data()[i].to_bits()
                );
                assert_eq!(f1.rgb.data[i], f2.rgb.data[i]);
            }
        }
    }

    #[test]
    fn hpr_single_point_is_visible() {
        let cloud =
            PointCloud::from_positions(vec![Point3::new(0.0, 0.0, 5.0)], PointSource::Lidar);
        let vis = hidden_point_removal(&cloud, &Point3::origin(), 2.0).unwrap();
        assert_eq!(vis, vec![0]);
    }

    #[test]
    fn hpr_rejects_point_at_viewpoint_and_empty_cloud() {
        let cloud = PointCloud::from_positions(vec![Point3::origin()], PointSource::Lidar);
        assert_eq!(
            hidden_point_removal(&cloud, &Point3::origin(), 2.0),
            Err(RenderError::PointAtViewpoint(0))
        );
        assert_eq!(
            hidden_point_removal(&PointCloud::empty(), &Point3::origin(), 2.0),
            Err(RenderError::EmptyCloud)
        );
    }

    #[test]
    fn hpr_rejects_cloud_coplanar_with_viewpoint() {
        // Points in the z=0 plane through the viewpoint flip into the same plane.
        let mut rng = StdRng::seed_from_u64(4);
        let pts: Vec<Point3<f64>> = (0..50)
            .map(|_| Point3::new(rng.gen_range(1.0..5.0), rng.gen_range(-3.0..3.0), 0.0))
            .collect();
        let cloud = PointCloud::from_positions(pts, PointSource::Lidar);
        assert_eq!(
            hidden_point_removal(&cloud, &Point3::origin(), 2.0),
            Err(RenderError::DegenerateCloud)
        );
    }

    #[test]
    fn hpr_two_planes_occlusion() {
        // Near plane fully covers the far plane's silhouette from the origin.
        let mut rng = StdRng::seed_from_u64(77);
        let mut positions = Vec::new();
        let n_near = 3600;
        let n_far = 3600;
        for _ in 0..n_near {
            positions.push(Point3::new(
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-6.0..6.0),
                5.0,
            ));
        }
        for _ in 0..n_far {
            positions.push(Point3::new(
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-6.0..6.0),
                15.0,
            ));
        }
        let cloud = PointCloud::from_positions(positions, PointSource::Lidar);
        let vis = hidden_point_removal(&cloud, &Point3::origin(), 2.0).unwrap();
        let near_kept = vis.iter().filter(|&&i| i < n_near).count();
        let far_kept = vis.iter().filter(|&&i| i >= n_near).count();
        assert!(near_kept as f64 >= 0.99 * n_near as f64, "near kept {near_kept}");
        assert!(far_kept as f64 <= 0.01 * n_far as f64, "far kept {far_kept}");
    }

    #[test]
    fn hpr_sphere_front_hemisphere() {
        let mut rng = StdRng::seed_from_u64(78);
        let center = Point3::new(0.0, 0.0, 10.0);
        let r = 2.0;
        let n = 4000;
        let mut positions = Vec::with_capacity(n);
        for _ in 0..n {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            positions.push(center + v * r);
        }
        let cloud = PointCloud::from_positions(positions.clone(), PointSource::Lidar);
        let view = Point3::origin();
        let vis = hidden_point_removal(&cloud, &view, 2.0).unwrap();
        let vis_set: std::collections::HashSet<usize> = vis.into_iter().collect();
        let mut agree = 0;
        for (i, p) in positions.iter().enumerate() {
            let analytic_visible = (p - center).dot(&(view - p)) > 0.0;
            if analytic_visible == vis_set.contains(&i) {
                agree += 1;
            }
        }
        assert!(
            agree as f64 >= 0.95 * n as f64,
            "hemisphere agreement {agree}/{n}"
        );
    }
}
