//! Novel-view-synthesis-side geometry: build sparse RGB-D conditions for
//! temporal offsets and novel viewpoints, perturb trajectories laterally, and
//! run the self-supervised cycle-consistency (SCC) round trip against a
//! pluggable view densifier.

use crate::cloud::PointCloud;
use crate::curation;
use crate::geometry::{Intrinsics, Pose};
use crate::render::{self, ConditionFrame, DepthFrame, DepthRange, RgbRaster};
use crate::seeding;
use nalgebra::Vector3;
use rand::distributions::{Distribution, Uniform};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NvsError {
    #[error("frame offset {t}+{n} outside sequence of {len} frames")]
    OffsetOutOfRange { t: usize, n: i64, len: usize },
    #[error("condition frame has no valid pixels")]
    EmptyCondition,
    #[error("trajectory poses must be nonempty")]
    EmptyTrajectory,
    #[error(
        "densifier '{densifier}' violates its tolerance at {violations}/{checked} condition pixels"
    )]
    DensifierContractViolation { densifier: String, violations: usize, checked: usize },
    #[error("densifier process failed: {0}")]
    DensifierProcess(String),
    #[error("render: {0}")]
    Render(#[from] render::RenderError),
    #[error("densify: {0}")]
    Curation(#[from] curation::CurationError),
}

/// Ordered ego poses (world frame). The ego lateral axis is the pose y axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self, NvsError> {
        if poses.is_empty() {
            return Err(NvsError::EmptyTrajectory);
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// One camera's view of a frame: pose, intrinsics, and its dense RGB-D data.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub rgb: RgbRaster,
    pub depth: DepthFrame,
}

/// All cameras of one time step.
#[derive(Debug, Clone, Default)]
pub struct RigFrame {
    pub cameras: Vec<CameraView>,
}

/// Union of the per-camera back-projected RGB-D points of one time step, in
/// rig order then row-major pixel order.
pub fn surround_cloud(frame: &RigFrame) -> Result<PointCloud, NvsError> {
    let mut cloud = PointCloud::empty();
    for cam in &frame.cameras {
        let part = render::depth_to_cloud(&cam.rgb, &cam.depth, &cam.pose, &cam.intrinsics)?;
        cloud = cloud.concat(&part);
    }
    Ok(cloud)
}

/// Splat the frame's surround cloud into arbitrary target views; one
/// condition frame per target.
pub fn condition_at_view(
    frame: &RigFrame,
    targets: &[(Pose, Intrinsics)],
    range: DepthRange,
) -> Result<Vec<ConditionFrame>, NvsError> {
    condition_from_cloud(&surround_cloud(frame)?, targets, range)
}

/// Splat an already-built cloud into target views. Lets callers thin the
/// surround cloud first (voxel downsampling as data augmentation).
pub fn condition_from_cloud(
    cloud: &PointCloud,
    targets: &[(Pose, Intrinsics)],
    range: DepthRange,
) -> Result<Vec<ConditionFrame>, NvsError> {
    Ok(targets
        .iter()
        .map(|(pose, k)| render::splat(cloud, pose, k, range))
        .collect())
}

/// Project frame t's surround cloud into the camera poses of frame t+n; one
/// condition frame per rig camera.
pub fn condition_at_offset(
    frames: &[RigFrame],
    t: usize,
    n: i64,
    range: DepthRange,
) -> Result<Vec<ConditionFrame>, NvsError> {
    let target = t as i64 + n;
    if t >= frames.len() || target < 0 || target as usize >= frames.len() {
        return Err(NvsError::OffsetOutOfRange { t, n, len: frames.len() });
    }
    let targets: Vec<(Pose, Intrinsics)> = frames[target as usize]
        .cameras
        .iter()
        .map(|c| (c.pose, c.intrinsics))
        .collect();
    condition_at_view(&frames[t], &targets, range)
}

/// How lateral offsets are sampled for a perturbed trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMode {
    /// Independent tau per frame (default).
    PerFrame,
    /// A single tau shared by the whole trajectory.
    PerTrajectory,
}

/// Shift every pose of the trajectory along its own lateral (y) axis by a
/// uniform random offset from `tau_range`; rotations are untouched.
/// Deterministic for a given seed, independent of evaluation order.
pub fn perturb_trajectory(
    traj: &Trajectory,
    seed: u64,
    tau_range: (f64, f64),
    mode: TauMode,
) -> Trajectory {
    let (lo, hi) = tau_range;
    assert!(lo <= hi && lo.is_finite() && hi.is_finite(), "invalid tau range");
    let shared_tau = match mode {
        TauMode::PerTrajectory => {
            let mut rng = seeding::stream_rng(seed, &[seeding::streams::TRAJECTORY]);
            Some(sample_uniform(&mut rng, lo, hi))
        }
        TauMode::PerFrame => None,
    };
    let poses = traj
        .poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let tau = shared_tau.unwrap_or_else(|| {
                let mut rng =
                    seeding::stream_rng(seed, &[seeding::streams::TRAJECTORY, i as u64]);
                sample_uniform(&mut rng, lo, hi)
            });
            shift_lateral(pose, tau)
        })
        .collect();
    Trajectory { poses }
}

fn sample_uniform(rng: &mut impl rand::Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    Uniform::new_inclusive(lo, hi).sample(rng)
}

/// Translate a pose by `tau` along its own y (lateral) axis.
pub fn shift_lateral(pose: &Pose, tau: f64) -> Pose {
    if tau == 0.0 {
        // Exact identity, bit-preserving.
        return *pose;
    }
    let lateral: Vector3<f64> = pose.rotation().column(1).into_owned();
    Pose::new(*pose.rotation(), pose.translation() + lateral * tau)
        .expect("rotation unchanged")
}

/// Agreement tolerance a view densifier declares for valid condition pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifierTolerance {
    /// Per-channel RGB tolerance in 8-bit units.
    pub rgb_abs: f64,
    pub depth_abs: f64,
    /// Relative depth tolerance (fraction of the condition depth).
    pub depth_rel: f64,
    /// Fraction of valid condition pixels allowed to exceed the tolerance.
    pub max_violation_fraction: f64,
    /// Absolute violating-pixel allowance (silhouette quantization slack).
    pub violation_floor: usize,
}

impl DensifierTolerance {
    pub fn exact() -> Self {
        Self {
            rgb_abs: 0.0,
            depth_abs: 0.0,
            depth_rel: 0.0,
            max_violation_fraction: 0.0,
            violation_floor: 0,
        }
    }
}

/// Seam for the novel-view synthesis network: turn a sparse condition into a
/// dense RGB-D frame at the same view. Output should be valid everywhere and
/// agree with the condition at its valid pixels within the declared tolerance.
pub trait ViewDensifier {
    fn densify(&self, ctx: &ViewDensifyContext) -> Result<(RgbRaster, DepthFrame), NvsError>;
    fn tolerance(&self) -> DensifierTolerance;
    fn name(&self) -> &'static str;
}

/// Condition plus the view it was rendered at.
pub struct ViewDensifyContext<'a> {
    pub condition: &'a ConditionFrame,
    pub cam: &'a Pose,
    pub intrinsics: &'a Intrinsics,
}

/// Default deterministic stand-in: nearest-valid fill of both depth and color.
pub struct NearestFillDensifier;

impl ViewDensifier for NearestFillDensifier {
    fn densify(&self, ctx: &ViewDensifyContext) -> Result<(RgbRaster, DepthFrame), NvsError> {
        let cond = ctx.condition;
        let depth = &cond.depth;
        if depth.valid_count() == 0 {
            return Err(NvsError::EmptyCondition);
        }
        let map = curation::nearest_valid_map(depth.width(), depth.height(), depth.valid_data())?;
        let data: Vec<f64> =
            map.iter().map(|&i| depth.depth_data()[i as usize]).collect();
        let rgb_data: Vec<[u8; 3]> = map.iter().map(|&i| cond.rgb.data[i as usize]).collect();
        Ok((
            RgbRaster { width: depth.width(), height: depth.height(), data: rgb_data },
            DepthFrame::from_raw(depth.width(), depth.height(), data, depth.range())
                .expect("nearest-valid depths are in range"),
        ))
    }

    fn tolerance(&self) -> DensifierTolerance {
        DensifierTolerance::exact()
    }

    fn name(&self) -> &'static str {
        "nearest-fill"
    }
}

/// Test densifier backed by the analytic scene: ray-casts the novel view.
/// Missed rays are filled with the range maximum and sky color.
pub struct OracleViewDensifier {
    pub scene: crate::synth::SynthScene,
    pub tolerance: DensifierTolerance,
}

impl OracleViewDensifier {
    pub fn new(scene: crate::synth::SynthScene) -> Self {
        // Splatted conditions inherently disagree with the analytic surface
        // in places: half-pixel rounding (large in absolute terms on grazing
        // surfaces, hence the relative term) and stale points around curved
        // or thin geometry whose self-occlusion boundary moves with the
        // viewpoint. The fraction bound still catches systematic breakage
        // such as a wrong pose, which violates nearly everywhere.
        Self {
            scene,
            tolerance: DensifierTolerance {
                rgb_abs: 48.0,
                depth_abs: 0.5,
                depth_rel: 0.08,
                max_violation_fraction: 0.10,
                violation_floor: 64,
            },
        }
    }
}

impl ViewDensifier for OracleViewDensifier {
    fn densify(&self, ctx: &ViewDensifyContext) -> Result<(RgbRaster, DepthFrame), NvsError> {
        let range = ctx.condition.depth.range();
        let (rgb, cast) =
            crate::synth::raycast_depth(&self.scene, ctx.cam, ctx.intrinsics, range);
        let mut data = cast.depth_data().to_vec();
        for (i, v) in cast.valid_data().iter().enumerate() {
            if !v {
                data[i] = range.max;
            }
        }
        let depth = DepthFrame::from_raw(cast.width(), cast.height(), data, range)
            .expect("filled raster is in range");
        Ok((rgb, depth))
    }

    fn tolerance(&self) -> DensifierTolerance {
        self.tolerance
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// External-process view densifier. The engine writes `cond_rgb.png`,
/// `cond_depth.pfm`, and `cond_mask.png` to a fresh temp directory, then
/// invokes the configured command with those three paths plus the output
/// paths `dense_rgb.png` and `dense_depth.pfm` appended; a nonzero exit is a
/// densifier failure.
pub struct ExternalViewDensifier {
    pub command: Vec<String>,
    pub tolerance: DensifierTolerance,
}

impl ExternalViewDensifier {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            tolerance: DensifierTolerance {
                rgb_abs: 48.0,
                depth_abs: 0.5,
                depth_rel: 0.08,
                max_violation_fraction: 0.10,
                violation_floor: 64,
            },
        }
    }
}

impl ViewDensifier for ExternalViewDensifier {
    fn densify(&self, ctx: &ViewDensifyContext) -> Result<(RgbRaster, DepthFrame), NvsError> {
        use crate::io;
        let fail = |m: String| NvsError::DensifierProcess(m);
        if self.command.is_empty() {
            return Err(fail("empty command".into()));
        }
        let dir = tempfile::tempdir().map_err(|e| fail(format!("tempdir: {e}")))?;
        let rgb_path = dir.path().join("cond_rgb.png");
        let depth_path = dir.path().join("cond_depth.pfm");
        let mask_path = dir.path().join("cond_mask.png");
        let out_rgb = dir.path().join("dense_rgb.png");
        let out_depth = dir.path().join("dense_depth.pfm");
        let cond = ctx.condition;
        let mask = crate::render::Mask {
            width: cond.width(),
            height: cond.height(),
            bits: cond.valid().to_vec(),
        };
        io::png::write_rgb(&rgb_path, &cond.rgb)
            .and_then(|_| io::pfm::write(&depth_path, &cond.depth))
            .and_then(|_| io::png::write_mask(&mask_path, &mask))
            .map_err(|e| fail(format!("write inputs: {e}")))?;

        let status = std::process::Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&rgb_path)
            .arg(&depth_path)
            .arg(&mask_path)
            .arg(&out_rgb)
            .arg(&out_depth)
            .status()
            .map_err(|e| fail(format!("spawn: {e}")))?;
        if !status.success() {
            return Err(fail(format!("command exited with {status}")));
        }
        let rgb = io::png::read_rgb(&out_rgb).map_err(|e| fail(format!("read rgb: {e}")))?;
        let depth = io::pfm::read(&out_depth, cond.depth.range())
            .map_err(|e| fail(format!("read depth: {e}")))?;
        Ok((rgb, depth))
    }

    fn tolerance(&self) -> DensifierTolerance {
        self.tolerance
    }

    fn name(&self) -> &'static str {
        "external"
    }
}

/// Test densifier that fills nothing: output equals the condition, holes
/// included. Violates the valid-everywhere expectation on purpose; useful for
/// occlusion-monotonicity checks.
pub struct HolePreservingDensifier;

impl ViewDensifier for HolePreservingDensifier {
    fn densify(&self, ctx: &ViewDensifyContext) -> Result<(RgbRaster, DepthFrame), NvsError> {
        Ok((ctx.condition.rgb.clone(), ctx.condition.depth.clone()))
    }

    fn tolerance(&self) -> DensifierTolerance {
        DensifierTolerance::exact()
    }

    fn name(&self) -> &'static str {
        "hole-preserving"
    }
}

/// Residuals between the round-trip condition and the original frame,
/// restricted to the intersection of their valid masks.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SccResiduals {
    /// Mean absolute RGB error, normalized to [0, 1].
    pub rgb_mae: f64,
    /// Median absolute depth error in meters.
    pub depth_median_abs_err: f64,
    pub n_pixels: usize,
}

/// One camera's SCC training pair: the condition reprojected back from the
/// densified novel view, and the original dense frame as the target.
#[derive(Debug, Clone)]
pub struct SccPair {
    pub condition: ConditionFrame,
    pub target_rgb: RgbRaster,
    pub target_depth: DepthFrame,
    pub residuals: SccResiduals,
}

/// Outcome of one SCC round trip across all rig cameras.
#[derive(Debug, Clone)]
pub struct SccRoundTrip {
    pub pairs: Vec<SccPair>,
    /// Residuals pooled over all cameras.
    pub pooled: SccResiduals,
}

/// Run the SCC cycle for one frame: project onto the novel cameras, densify
/// there, reproject back to the original cameras, and pair the result with
/// the original dense frames.
pub fn scc_roundtrip(
    frame: &RigFrame,
    novel_cams: &[Pose],
    densifier: &dyn ViewDensifier,
    range: DepthRange,
) -> Result<SccRoundTrip, NvsError> {
    assert_eq!(frame.cameras.len(), novel_cams.len(), "one novel pose per camera");

    // Forward: original surround cloud into the novel views.
    let targets: Vec<(Pose, Intrinsics)> = novel_cams
        .iter()
        .zip(&frame.cameras)
        .map(|(pose, cam)| (*pose, cam.intrinsics))
        .collect();
    let conditions = condition_at_view(frame, &targets, range)?;

    // Densify each novel view and verify the densifier honored its contract.
    let mut novel_frame = RigFrame::default();
    for (cond, (pose, k)) in conditions.iter().zip(&targets) {
        let ctx = ViewDensifyContext { condition: cond, cam: pose, intrinsics: k };
        let (rgb, depth) = densifier.densify(&ctx)?;
        check_densifier_contract(densifier, cond, &rgb, &depth)?;
        novel_frame
            .cameras
            .push(CameraView { pose: *pose, intrinsics: *k, rgb, depth });
    }

    // Backward: densified novel surround cloud into the original views.
    let back_targets: Vec<(Pose, Intrinsics)> =
        frame.cameras.iter().map(|c| (c.pose, c.intrinsics)).collect();
    let back = condition_at_view(&novel_frame, &back_targets, range)?;

    let mut pairs = Vec::with_capacity(back.len());
    let mut all_rgb_err = 0.0f64;
    let mut all_rgb_n = 0usize;
    let mut all_depth_err: Vec<f64> = Vec::new();
    for (cond, cam) in back.into_iter().zip(&frame.cameras) {
        let mut rgb_err = 0.0f64;
        let mut depth_err: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for i in 0..cond.depth.len() {
            if !cond.depth.valid_data()[i] || !cam.depth.valid_data()[i] {
                continue;
            }
            n += 1;
            let a = cond.rgb.data[i];
            let b = cam.rgb.data[i];
            for ch in 0..3 {
                rgb_err += (a[ch] as f64 - b[ch] as f64).abs();
            }
            depth_err
                .push((cond.depth.depth_data()[i] - cam.depth.depth_data()[i]).abs());
        }
        all_rgb_err += rgb_err;
        all_rgb_n += n;
        all_depth_err.extend_from_slice(&depth_err);
        let residuals = SccResiduals {
            rgb_mae: if n == 0 { 0.0 } else { rgb_err / (n as f64 * 3.0) / 255.0 },
            depth_median_abs_err: median(&mut depth_err),
            n_pixels: n,
        };
        pairs.push(SccPair {
            condition: cond,
            target_rgb: cam.rgb.clone(),
            target_depth: cam.depth.clone(),
            residuals,
        });
    }
    let pooled = SccResiduals {
        rgb_mae: if all_rgb_n == 0 {
            0.0
        } else {
            all_rgb_err / (all_rgb_n as f64 * 3.0) / 255.0
        },
        depth_median_abs_err: median(&mut all_depth_err),
        n_pixels: all_rgb_n,
    };
    Ok(SccRoundTrip { pairs, pooled })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn check_densifier_contract(
    densifier: &dyn ViewDensifier,
    cond: &ConditionFrame,
    rgb: &RgbRaster,
    depth: &DepthFrame,
) -> Result<(), NvsError> {
    let tol = densifier.tolerance();
    let mut checked = 0usize;
    let mut violations = 0usize;
    for i in 0..cond.depth.len() {
        if !cond.depth.valid_data()[i] {
            continue;
        }
        checked += 1;
        let want = cond.depth.depth_data()[i];
        let allowed = tol.depth_abs.max(tol.depth_rel * want);
        let mut bad = (depth.depth_data()[i] - want).abs() > allowed;
        if !bad {
            for ch in 0..3 {
                if (rgb.data[i][ch] as f64 - cond.rgb.data[i][ch] as f64).abs() > tol.rgb_abs {
                    bad = true;
                    break;
                }
            }
        }
        if bad {
            violations += 1;
        }
    }
    let allowed = (tol.max_violation_fraction * checked as f64).max(tol.violation_floor as f64);
    if checked > 0 && violations as f64 > allowed {
        return Err(NvsError::DensifierContractViolation {
            densifier: densifier.name().to_string(),
            violations,
            checked,
        });
    }
    Ok(())
}
