use crate::manifest::ManifestBuilder;
use crate::{CmdResult, CommonArgs};
use anyhow::Context;
use clap::Args;
use rgbd_core::config::PipelineConfig;
use rgbd_core::geometry::{Intrinsics, Pose};
use rgbd_core::io::{bundle::Bundle, json, pfm, png};
use rgbd_core::nvs;
use rgbd_core::render::{ConditionFrame, DepthRange, Mask};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct RenderArgs {
    /// Input bundle directory (frames need rgb.png and depth.pfm).
    #[arg(long)]
    bundle: PathBuf,
    /// Source frame index.
    #[arg(long)]
    frame: usize,
    /// Temporal offset n: project frame t onto the cameras of frame t+n.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "shift")]
    offset: Option<i64>,
    /// Lateral viewpoint shift in meters along the ego y axis.
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<f64>,
    /// Voxel-downsample the surround cloud to this resolution (meters)
    /// before splatting; the sparser-condition data augmentation.
    #[arg(long)]
    voxel: Option<f64>,
}

#[derive(Serialize)]
struct ConditionMeta {
    frame: usize,
    offset: Option<i64>,
    shift: Option<f64>,
    camera: String,
    source_pose: [[f64; 4]; 4],
    target_pose: [[f64; 4]; 4],
}

pub fn write_condition(
    dir: &Path,
    cond: &ConditionFrame,
) -> Result<Vec<PathBuf>, anyhow::Error> {
    let rgb_path = dir.join("cond_rgb.png");
    let depth_path = dir.join("cond_depth.pfm");
    let mask_path = dir.join("cond_mask.png");
    png::write_rgb(&rgb_path, &cond.rgb).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    pfm::write(&depth_path, &cond.depth).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mask = Mask {
        width: cond.width(),
        height: cond.height(),
        bits: cond.valid().to_vec(),
    };
    png::write_mask(&mask_path, &mask).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(vec![rgb_path, depth_path, mask_path])
}

pub fn run(args: &RenderArgs, common: &CommonArgs, cfg: &PipelineConfig, out: &Path) -> CmdResult {
    let bundle = Bundle::open(&args.bundle).context("opening bundle")?;
    let range = DepthRange::new(cfg.depth.min, cfg.depth.max)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let t = args.frame;
    if t >= bundle.frame_count() {
        anyhow::bail!("frame {t} out of range ({} frames)", bundle.frame_count());
    }
    let frame = bundle.rig_frame(t, range).context("loading rig frame")?;

    let targets: Vec<(Pose, Intrinsics)> = match (args.offset, args.shift) {
        (Some(n), None) => {
            let target = t as i64 + n;
            if target < 0 || target as usize >= bundle.frame_count() {
                anyhow::bail!(
                    "offset {n} leaves the sequence (frame {t}, {} frames)",
                    bundle.frame_count()
                );
            }
            bundle.cameras_at(target as usize)?
        }
        (None, Some(tau)) => {
            let cams = bundle.cameras_at(t)?;
            let ego = bundle.script.frames[t].ego_to_world;
            super::shift_cameras_lateral(&cams, &ego, tau)
                .into_iter()
                .zip(cams.iter().map(|(_, k)| *k))
                .collect()
        }
        _ => anyhow::bail!("exactly one of --offset or --shift is required"),
    };

    let mut cloud = nvs::surround_cloud(&frame)
        .map_err(|e| super::stage_err("condition", anyhow::anyhow!(e.to_string())))?;
    if let Some(res) = args.voxel {
        cloud = rgbd_core::cloud::voxel_downsample(&cloud, res)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    }
    let conditions = nvs::condition_from_cloud(&cloud, &targets, range)
        .map_err(|e| super::stage_err("condition", anyhow::anyhow!(e.to_string())))?;

    let mut manifest = ManifestBuilder::new("render-condition", cfg, out)?;
    manifest.input_tree(&args.bundle)?;
    let names = bundle.camera_names();
    for ((cond, name), (target_pose, _)) in conditions.iter().zip(&names).zip(&targets) {
        let dir = out.join(format!("{t:04}")).join(name);
        for p in write_condition(&dir, cond)? {
            manifest.output(&p);
        }
        let meta_path = dir.join("meta.json");
        let source_pose = frame.cameras[names.iter().position(|n| n == name).unwrap()].pose;
        json::write_json(
            &meta_path,
            &ConditionMeta {
                frame: t,
                offset: args.offset,
                shift: args.shift,
                camera: name.clone(),
                source_pose: json::pose_to_rows(&source_pose),
                target_pose: json::pose_to_rows(target_pose),
            },
        )
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        manifest.output(&meta_path);
    }
    let _ = common;
    manifest.write()
}
