//! Pseudo-ground-truth depth curation: fuse aggregated LiDAR and filtered MVS
//! clouds into a sparse depth prompt, densify by nearest-neighbor
//! interpolation, hand off to a pluggable completion backend, and assign sky
//! depth.

use crate::cloud::{self, BBox3D, PointCloud, PointSource};
use crate::config::PipelineConfig;
use crate::geometry::{self, Intrinsics, Pose, RelativeTransform};
use crate::render::{self, DepthFrame, DepthRange, Mask, RgbRaster};
use crate::synth::SynthScene;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("prompt has no valid pixels")]
    EmptyPrompt,
    #[error("raster size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("raster {0}x{1} exceeds the supported size (max 2047 per side)")]
    RasterTooLarge(usize, usize),
    #[error("sky depth {sky} outside frame range [{min}, {max}]")]
    SkyDepthOutOfRange { sky: f64, min: f64, max: f64 },
    #[error("prompt source tags inconsistent with validity at pixel {0}")]
    InconsistentPrompt(usize),
    #[error("backend '{backend}' output is not valid everywhere")]
    BackendOutputInvalid { backend: String },
    #[error(
        "backend '{backend}' violates its tolerance at {violations}/{checked} lidar prompt pixels"
    )]
    ContractViolation { backend: String, violations: usize, checked: usize },
    #[error("backend process failed: {0}")]
    BackendProcess(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<dyn std::error::Error + Send + Sync> },
}

fn stage<E>(name: &'static str) -> impl FnOnce(E) -> CurationError
where
    E: std::error::Error + Send + Sync + 'static,
{
    move |e| CurationError::Stage { stage: name, source: Box::new(e) }
}

/// Origin of a prompt pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PromptSource {
    None = 0,
    Lidar = 1,
    Mvs = 2,
}

impl PromptSource {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(PromptSource::None),
            1 => Some(PromptSource::Lidar),
            2 => Some(PromptSource::Mvs),
            _ => None,
        }
    }
}

/// Sparse depth raster with per-pixel source tags. A pixel is tagged `None`
/// exactly when it is invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPrompt {
    pub depth: DepthFrame,
    pub source: Vec<PromptSource>,
}

impl DepthPrompt {
    pub fn new(depth: DepthFrame, source: Vec<PromptSource>) -> Result<Self, CurationError> {
        if source.len() != depth.len() {
            return Err(CurationError::SizeMismatch(
                depth.width(),
                depth.height(),
                source.len(),
                1,
            ));
        }
        for (i, (&v, &s)) in depth.valid_data().iter().zip(&source).enumerate() {
            if v == (s == PromptSource::None) {
                return Err(CurationError::InconsistentPrompt(i));
            }
        }
        Ok(Self { depth, source })
    }

    pub fn valid_count(&self) -> usize {
        self.depth.valid_count()
    }
}

const MAX_EDT_SIDE: usize = 2047;

/// Per-pixel index of the nearest valid pixel under Euclidean pixel distance,
/// ties broken by smaller row then smaller column. Exact: computed by a
/// two-pass lower-envelope transform over integer keys that encode
/// (distance^2, site row, site column) lexicographically.
pub fn nearest_valid_map(
    width: usize,
    height: usize,
    valid: &[bool],
) -> Result<Vec<u32>, CurationError> {
    assert_eq!(valid.len(), width * height, "mask length mismatch");
    if width > MAX_EDT_SIDE || height > MAX_EDT_SIDE {
        return Err(CurationError::RasterTooLarge(width, height));
    }
    if !valid.iter().any(|&v| v) {
        return Err(CurationError::EmptyPrompt);
    }

    // Pass 1: per column, nearest valid row (ties to the smaller row).
    const NO_SITE: i64 = i64::MAX;
    let mut col_site: Vec<i64> = vec![NO_SITE; width * height]; // row index of site
    let mut col_d2: Vec<i64> = vec![NO_SITE; width * height];
    for x in 0..width {
        let mut last: Option<i64> = None;
        for y in 0..height {
            if valid[y * width + x] {
                last = Some(y as i64);
            }
            if let Some(sy) = last {
                let dy = y as i64 - sy;
                col_site[y * width + x] = sy;
                col_d2[y * width + x] = dy * dy;
            }
        }
        let mut next: Option<i64> = None;
        for y in (0..height).rev() {
            if valid[y * width + x] {
                next = Some(y as i64);
            }
            if let Some(sy) = next {
                let dy = sy - y as i64;
                let d2 = dy * dy;
                let i = y * width + x;
                // Strict improvement only: on equal dy^2 the upper site
                // (smaller row) recorded by the forward sweep wins.
                if d2 < col_d2[i] {
                    col_d2[i] = d2;
                    col_site[i] = sy;
                }
            }
        }
    }

    // Pass 2: per row, lower envelope of parabolas over packed keys
    // K(x) = ((x - sx)^2 + dy^2) * 2^22 + sy * 2^11 + sx.
    const SHIFT_D2: i64 = 1 << 22;
    const SHIFT_ROW: i64 = 1 << 11;
    let mut out = vec![0u32; width * height];
    let mut verts: Vec<i64> = Vec::with_capacity(width);
    let mut offsets: Vec<i64> = Vec::with_capacity(width);
    let mut bounds: Vec<f64> = Vec::with_capacity(width + 1);
    for y in 0..height {
        verts.clear();
        offsets.clear();
        bounds.clear();
        for x in 0..width {
            let i = y * width + x;
            if col_d2[i] == NO_SITE {
                continue;
            }
            let b = col_d2[i] * SHIFT_D2 + col_site[i] * SHIFT_ROW + x as i64;
            let v = x as i64;
            // Pop envelope entries dominated by the new parabola.
            while let (Some(&pv), Some(&pb)) = (verts.last(), offsets.last()) {
                let s = intersect_parabolas(pv, pb, v, b, SHIFT_D2);
                if verts.len() == 1 || s > *bounds.last().unwrap() {
                    bounds.push(s);
                    break;
                }
                verts.pop();
                offsets.pop();
                bounds.pop();
            }
            if verts.is_empty() {
                bounds.push(f64::NEG_INFINITY);
            }
            verts.push(v);
            offsets.push(b);
        }
        debug_assert!(!verts.is_empty());
        let mut k = 0usize;
        for x in 0..width {
            while k + 1 < verts.len() && bounds[k + 1] < x as f64 {
                k += 1;
            }
            let sx = verts[k] as usize;
            let sy = col_site[y * width + sx] as usize;
            out[y * width + x] = (sy * width + sx) as u32;
        }
    }
    Ok(out)
}

/// Boundary where parabola (v2, b2) overtakes (v1, b1); both share the
/// leading coefficient `a`. Inputs are exact integers well inside f64 range.
fn intersect_parabolas(v1: i64, b1: i64, v2: i64, b2: i64, a: i64) -> f64 {
    let num = (b2 - b1 + a * (v2 * v2 - v1 * v1)) as f64;
    let den = (2 * a * (v2 - v1)) as f64;
    num / den
}

/// Fill every invalid pixel with the depth of its nearest valid pixel.
/// Valid pixels pass through unchanged; the result is valid everywhere.
pub fn densify_nn(prompt: &DepthPrompt) -> Result<DepthFrame, CurationError> {
    let depth = &prompt.depth;
    let map = nearest_valid_map(depth.width(), depth.height(), depth.valid_data())?;
    let data: Vec<f64> =
        map.iter().map(|&i| depth.depth_data()[i as usize]).collect();
    Ok(DepthFrame::from_raw(depth.width(), depth.height(), data, depth.range())
        .expect("nearest-valid depths are in range"))
}

/// Chebyshev dilation of a boolean raster by `radius` pixels.
fn dilate_chebyshev(width: usize, height: usize, bits: &[bool], radius: u32) -> Vec<bool> {
    let r = radius as i64;
    let mut rows = vec![false; width * height];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let lo = (x - r).max(0);
            let hi = (x + r).min(width as i64 - 1);
            let mut any = false;
            for xx in lo..=hi {
                if bits[(y * width as i64 + xx) as usize] {
                    any = true;
                    break;
                }
            }
            rows[(y * width as i64 + x) as usize] = any;
        }
    }
    let mut out = vec![false; width * height];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let lo = (y - r).max(0);
            let hi = (y + r).min(height as i64 - 1);
            let mut any = false;
            for yy in lo..=hi {
                if rows[(yy * width as i64 + x) as usize] {
                    any = true;
                    break;
                }
            }
            out[(y * width as i64 + x) as usize] = any;
        }
    }
    out
}

/// Splat both clouds into the view and merge with LiDAR priority: MVS depth is
/// used only at pixels farther than `lidar_priority_radius` (Chebyshev) from
/// every LiDAR-valid pixel.
pub fn fuse_depth(
    lidar: &PointCloud,
    mvs: &PointCloud,
    cam: &Pose,
    k: &Intrinsics,
    range: DepthRange,
    lidar_priority_radius: u32,
) -> DepthPrompt {
    let lidar_frame = render::splat(lidar, cam, k, range);
    let mvs_frame = render::splat(mvs, cam, k, range);
    let (w, h) = (k.width, k.height);
    let near_lidar =
        dilate_chebyshev(w, h, lidar_frame.depth.valid_data(), lidar_priority_radius);

    let mut depth = DepthFrame::empty(w, h, range);
    let mut source = vec![PromptSource::None; w * h];
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if lidar_frame.depth.valid_data()[i] {
                depth.set(row, col, lidar_frame.depth.depth_data()[i]);
                source[i] = PromptSource::Lidar;
            } else if mvs_frame.depth.valid_data()[i] && !near_lidar[i] {
                depth.set(row, col, mvs_frame.depth.depth_data()[i]);
                source[i] = PromptSource::Mvs;
            }
        }
    }
    DepthPrompt { depth, source }
}

/// Overwrite masked pixels with `sky_depth` and mark them valid.
pub fn apply_sky(
    depth: &DepthFrame,
    sky_mask: &Mask,
    sky_depth: f64,
) -> Result<DepthFrame, CurationError> {
    if sky_mask.width != depth.width() || sky_mask.height != depth.height() {
        return Err(CurationError::SizeMismatch(
            depth.width(),
            depth.height(),
            sky_mask.width,
            sky_mask.height,
        ));
    }
    let range = depth.range();
    if !range.contains(sky_depth) {
        return Err(CurationError::SkyDepthOutOfRange {
            sky: sky_depth,
            min: range.min,
            max: range.max,
        });
    }
    let mut out = depth.clone();
    for row in 0..depth.height() {
        for col in 0..depth.width() {
            if sky_mask.get(row, col) {
                out.set(row, col, sky_depth);
            }
        }
    }
    Ok(out)
}

/// Agreement tolerance a backend declares for lidar-tagged prompt pixels.
/// A check passes when the violating pixel count is at most
/// `max(max_violation_fraction * checked, violation_floor)`; the floor
/// absorbs silhouette quantization artifacts in views with few prompt pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendTolerance {
    pub depth_abs: f64,
    pub depth_rel: f64,
    /// Fraction of lidar prompt pixels allowed to exceed the tolerance.
    pub max_violation_fraction: f64,
    /// Absolute violating-pixel allowance.
    pub violation_floor: usize,
}

impl BackendTolerance {
    pub fn exact() -> Self {
        Self { depth_abs: 0.0, depth_rel: 0.0, max_violation_fraction: 0.0, violation_floor: 0 }
    }
}

/// Everything a completion backend may consult for one camera view.
pub struct DensifyContext<'a> {
    pub rgb: &'a RgbRaster,
    /// Sparse fused prompt.
    pub prompt: &'a DepthPrompt,
    /// Nearest-neighbor densification of the prompt (valid everywhere).
    pub initial: &'a DepthFrame,
    pub cam: &'a Pose,
    pub intrinsics: &'a Intrinsics,
}

/// Seam for the generative depth-completion network: consumes an RGB image
/// plus the fused depth prompt and returns dense depth. Implementations must
/// return a frame that is valid everywhere and agrees with the prompt at
/// lidar-tagged pixels within the declared tolerance.
pub trait DensifierBackend: Sync {
    fn densify(&self, ctx: &DensifyContext) -> Result<DepthFrame, CurationError>;
    fn tolerance(&self) -> BackendTolerance;
    fn name(&self) -> &'static str;
}

/// Default backend: the nearest-neighbor densification followed by a 3x3
/// median pass restricted to pixels whose prompt tag is not lidar. Lidar
/// prompt pixels are reproduced exactly.
pub struct MedianDensifier;

impl DensifierBackend for MedianDensifier {
    fn densify(&self, ctx: &DensifyContext) -> Result<DepthFrame, CurationError> {
        let initial = ctx.initial;
        let (w, h) = (initial.width(), initial.height());
        let mut data = initial.depth_data().to_vec();
        let mut hood = [0.0f64; 9];
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                if ctx.prompt.source[i] == PromptSource::Lidar {
                    continue;
                }
                let mut n = 0;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (rr, cc) = (row as i64 + dr, col as i64 + dc);
                        if rr >= 0 && rr < h as i64 && cc >= 0 && cc < w as i64 {
                            hood[n] = initial.get(rr as usize, cc as usize);
                            n += 1;
                        }
                    }
                }
                let window = &mut hood[..n];
                window.sort_unstable_by(f64::total_cmp);
                // Lower median keeps the result one of the input values.
                data[i] = window[(n - 1) / 2];
            }
        }
        Ok(DepthFrame::from_raw(w, h, data, initial.range())
            .expect("median of in-range values stays in range"))
    }

    fn tolerance(&self) -> BackendTolerance {
        BackendTolerance::exact()
    }

    fn name(&self) -> &'static str {
        "median"
    }
}

/// Test/fixture backend: analytic ray-cast of a known scene; pixels the rays
/// miss are filled with the range maximum (the sky override replaces them).
pub struct OracleDensifier {
    pub scene: SynthScene,
    pub tolerance: BackendTolerance,
}

impl OracleDensifier {
    pub fn new(scene: SynthScene) -> Self {
        // Sparse prompts sample true surfaces, but half-pixel rounding on
        // sloped geometry and residual occlusion leaks around thin or
        // under-sampled occluders need slack.
        Self {
            scene,
            tolerance: BackendTolerance {
                depth_abs: 0.5,
                depth_rel: 0.08,
                max_violation_fraction: 0.05,
                violation_floor: 32,
            },
        }
    }
}

impl DensifierBackend for OracleDensifier {
    fn densify(&self, ctx: &DensifyContext) -> Result<DepthFrame, CurationError> {
        let range = ctx.prompt.depth.range();
        let (_, cast) = crate::synth::raycast_depth(&self.scene, ctx.cam, ctx.intrinsics, range);
        let (w, h) = (cast.width(), cast.height());
        let mut data = cast.depth_data().to_vec();
        for (i, v) in cast.valid_data().iter().enumerate() {
            if !v {
                data[i] = range.max;
            }
        }
        Ok(DepthFrame::from_raw(w, h, data, range).expect("filled raster is in range"))
    }

    fn tolerance(&self) -> BackendTolerance {
        self.tolerance
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// External-process backend. The engine writes `rgb.png`, `prompt.pfm`, and
/// `prompt_source.png` (8-bit: 0 none, 1 lidar, 2 mvs) to a fresh temp
/// directory, then invokes the configured command with those three paths plus
/// the output path `dense.pfm` appended; a nonzero exit is a backend failure.
pub struct ExternalDensifier {
    pub command: Vec<String>,
    pub tolerance: BackendTolerance,
}

impl ExternalDensifier {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            tolerance: BackendTolerance {
                depth_abs: 0.5,
                depth_rel: 0.08,
                max_violation_fraction: 0.05,
                violation_floor: 32,
            },
        }
    }
}

impl DensifierBackend for ExternalDensifier {
    fn densify(&self, ctx: &DensifyContext) -> Result<DepthFrame, CurationError> {
        use crate::io;
        if self.command.is_empty() {
            return Err(CurationError::BackendProcess("empty command".into()));
        }
        let dir = tempfile::tempdir()
            .map_err(|e| CurationError::BackendProcess(format!("tempdir: {e}")))?;
        let rgb_path = dir.path().join("rgb.png");
        let prompt_path = dir.path().join("prompt.pfm");
        let source_path = dir.path().join("prompt_source.png");
        let out_path = dir.path().join("dense.pfm");
        io::png::write_rgb(&rgb_path, ctx.rgb)
            .and_then(|_| io::pfm::write(&prompt_path, &ctx.prompt.depth))
            .and_then(|_| {
                let tags: Vec<u8> =
                    ctx.prompt.source.iter().map(|s| *s as u8).collect();
                io::png::write_gray8(
                    &source_path,
                    ctx.prompt.depth.width(),
                    ctx.prompt.depth.height(),
                    &tags,
                )
            })
            .map_err(|e| CurationError::BackendProcess(format!("write inputs: {e}")))?;

        let status = std::process::Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&rgb_path)
            .arg(&prompt_path)
            .arg(&source_path)
            .arg(&out_path)
            .status()
            .map_err(|e| CurationError::BackendProcess(format!("spawn: {e}")))?;
        if !status.success() {
            return Err(CurationError::BackendProcess(format!(
                "command exited with {status}"
            )));
        }
        let dense = io::pfm::read(&out_path, ctx.prompt.depth.range())
            .map_err(|e| CurationError::BackendProcess(format!("read output: {e}")))?;
        Ok(dense)
    }

    fn tolerance(&self) -> BackendTolerance {
        self.tolerance
    }

    fn name(&self) -> &'static str {
        "external"
    }
}

fn check_backend_contract(
    backend: &dyn DensifierBackend,
    prompt: &DepthPrompt,
    dense: &DepthFrame,
) -> Result<(), CurationError> {
    if dense.width() != prompt.depth.width() || dense.height() != prompt.depth.height() {
        return Err(CurationError::SizeMismatch(
            prompt.depth.width(),
            prompt.depth.height(),
            dense.width(),
            dense.height(),
        ));
    }
    if dense.valid_count() != dense.len() {
        return Err(CurationError::BackendOutputInvalid { backend: backend.name().to_string() });
    }
    let tol = backend.tolerance();
    let mut checked = 0usize;
    let mut violations = 0usize;
    for (i, &s) in prompt.source.iter().enumerate() {
        if s != PromptSource::Lidar {
            continue;
        }
        checked += 1;
        let want = prompt.depth.depth_data()[i];
        let got = dense.depth_data()[i];
        let allowed = tol.depth_abs.max(tol.depth_rel * want);
        if (got - want).abs() > allowed {
            violations += 1;
        }
    }
    let allowed = (tol.max_violation_fraction * checked as f64).max(tol.violation_floor as f64);
    if checked > 0 && violations as f64 > allowed {
        return Err(CurationError::ContractViolation {
            backend: backend.name().to_string(),
            violations,
            checked,
        });
    }
    Ok(())
}

/// One frame's worth of curation inputs.
///
/// Coordinates: `lidar_frames[t]` is expressed in frame t's ego coordinates
/// and `egos[t]` maps those into the world (frame 0); `mvs` is expressed in
/// the center frame's ego coordinates; `boxes` and camera poses are world
/// frame. Per-camera rasters share each camera's intrinsics size.
pub struct CurationInputs<'a> {
    pub lidar_frames: &'a [PointCloud],
    pub egos: &'a [RelativeTransform],
    pub center: usize,
    pub mvs: &'a PointCloud,
    pub boxes: &'a [BBox3D],
    pub cameras: &'a [(Pose, Intrinsics)],
    pub rgb: &'a [RgbRaster],
    pub sky_masks: &'a [Mask],
    pub exclude_masks: &'a [Mask],
}

/// Drop points that project onto a set pixel of any camera's exclusion mask
/// (2D semantic filtering of MVS clouds; masks mark dynamic objects and sky).
pub fn filter_by_masks(
    cloud: &PointCloud,
    cameras: &[(Pose, Intrinsics)],
    masks: &[Mask],
    range: DepthRange,
) -> PointCloud {
    cloud.filter_by(|i| {
        let p = &cloud.positions[i];
        for ((cam, k), mask) in cameras.iter().zip(masks) {
            let pc = cam.to_local(p);
            if pc.z < range.min || pc.z > range.max {
                continue;
            }
            if let Ok((u, v, _)) = geometry::project(&pc, k) {
                let (pu, pv) = (u.round(), v.round());
                if pu >= 0.0 && pv >= 0.0 && (pu as usize) < k.width && (pv as usize) < k.height
                    && mask.get(pv as usize, pu as usize) {
                        return false;
                    }
            }
        }
        true
    })
}

/// Keep points inside an expanded camera frustum; visibility filtering ahead
/// of hidden-point removal. `margin` expands the image bounds multiplicatively.
fn cull_to_frustum(
    cloud: &PointCloud,
    cam: &Pose,
    k: &Intrinsics,
    range: DepthRange,
    margin: f64,
) -> PointCloud {
    let extra_u = (margin - 1.0) * 0.5 * k.width as f64;
    let extra_v = (margin - 1.0) * 0.5 * k.height as f64;
    cloud.filter_by(|i| {
        let pc = cam.to_local(&cloud.positions[i]);
        if pc.z <= 0.0 || pc.z > range.max * 1.05 {
            return false;
        }
        let u = k.fx * pc.x / pc.z + k.cx;
        let v = k.fy * pc.y / pc.z + k.cy;
        u >= -extra_u && u < k.width as f64 + extra_u && v >= -extra_v
            && v < k.height as f64 + extra_v
    })
}

/// Run the full per-frame curation pipeline and return one dense depth frame
/// per camera.
///
/// Stage order: aggregate lidar over the window -> remove dynamic points ->
/// filter the MVS cloud (height floor, then 2D exclusion masks) -> merge ->
/// voxel downsample -> per camera: hidden-point removal -> LiDAR-priority
/// fusion -> nearest-neighbor densification -> completion backend -> sky.
pub fn curate(
    inputs: &CurationInputs,
    cfg: &PipelineConfig,
    backend: &dyn DensifierBackend,
) -> Result<Vec<DepthFrame>, CurationError> {
    let range = DepthRange::new(cfg.depth.min, cfg.depth.max).map_err(stage("config"))?;
    let cur = &cfg.curation;

    let lidar_agg = cloud::aggregate_frames(
        inputs.lidar_frames,
        inputs.egos,
        inputs.center,
        cur.lidar_window,
    )
    .map_err(stage("aggregate"))?;
    let lidar_world = cloud::transform(&lidar_agg, &inputs.egos[inputs.center]);

    let lidar_static = cloud::remove_dynamic(&lidar_world, inputs.boxes, cur.box_margin)
        .map_err(stage("remove_dynamic"))?;

    let mvs_tall =
        cloud::filter_above_height(inputs.mvs, cur.mvs_height_floor).map_err(stage("mvs_filter"))?;
    let mvs_world = cloud::transform(&mvs_tall, &inputs.egos[inputs.center]);
    let mvs_clean = filter_by_masks(&mvs_world, inputs.cameras, inputs.exclude_masks, range);

    let merged = lidar_static.concat(&mvs_clean);
    let merged =
        cloud::voxel_downsample(&merged, cur.voxel_resolution).map_err(stage("voxel"))?;

    let mut out = Vec::with_capacity(inputs.cameras.len());
    for (ci, (cam, k)) in inputs.cameras.iter().enumerate() {
        let view_cloud = if cur.hpr_frustum_cull {
            cull_to_frustum(&merged, cam, k, range, cur.hpr_frustum_margin)
        } else {
            merged.clone()
        };
        let visible = if view_cloud.is_empty() {
            view_cloud.clone()
        } else {
            let idx = render::hidden_point_removal(&view_cloud, &cam.center(), cur.hpr_gamma)
                .map_err(stage("hpr"))?;
            view_cloud.select(&idx)
        };

        let lidar_vis = visible.filter_by(|i| visible.sources[i] == PointSource::Lidar);
        let mvs_vis = visible.filter_by(|i| visible.sources[i] == PointSource::Mvs);
        let prompt =
            fuse_depth(&lidar_vis, &mvs_vis, cam, k, range, cur.lidar_priority_radius);

        let initial = densify_nn(&prompt).map_err(stage("densify_nn"))?;
        let ctx = DensifyContext {
            rgb: &inputs.rgb[ci],
            prompt: &prompt,
            initial: &initial,
            cam,
            intrinsics: k,
        };
        let dense = backend.densify(&ctx).map_err(stage("backend"))?;
        check_backend_contract(backend, &prompt, &dense).map_err(stage("backend"))?;

        let final_depth =
            apply_sky(&dense, &inputs.sky_masks[ci], cfg.depth.sky).map_err(stage("sky"))?;
        out.push(final_depth);
    }
    Ok(out)
}
