use crate::manifest::ManifestBuilder;
use crate::{CmdResult, CommonArgs};
use anyhow::Context;
use clap::Args;
use rgbd_core::config::PipelineConfig;
use rgbd_core::fixture::{self, FixtureSpec};
use rgbd_core::io::json;
use rgbd_core::render::DepthRange;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct SynthArgs {
    /// Static scene JSON; the built-in street preset when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 17)]
    frames: usize,
    #[arg(long, default_value_t = 800)]
    width: usize,
    #[arg(long, default_value_t = 424)]
    height: usize,
    /// Number of rig cameras (1..=6).
    #[arg(long, default_value_t = 6)]
    cameras: usize,
    /// LiDAR stand-in sample density, points per square meter.
    #[arg(long, default_value_t = 0.5)]
    lidar_density: f64,
    /// MVS stand-in sample density, points per square meter.
    #[arg(long, default_value_t = 0.4)]
    mvs_density: f64,
}

pub fn run(args: &SynthArgs, common: &CommonArgs, cfg: &PipelineConfig, out: &Path) -> CmdResult {
    if args.frames == 0 || args.cameras == 0 || args.cameras > 6 {
        anyhow::bail!("frames must be > 0 and cameras in 1..=6");
    }
    let spec = FixtureSpec {
        frames: args.frames,
        width: args.width,
        height: args.height,
        camera_count: args.cameras,
        lidar_density: args.lidar_density,
        mvs_density: args.mvs_density,
        seed: cfg.seed,
        depth_range: DepthRange::new(cfg.depth.min, cfg.depth.max)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        sky_depth: cfg.depth.sky,
    };
    log::info!(
        "writing {} frames x {} cameras at {}x{} to {}",
        spec.frames,
        spec.camera_count,
        spec.width,
        spec.height,
        out.display()
    );
    match &args.scene {
        Some(path) => {
            let scene = json::read_scene(path).context("reading scene")?;
            fixture::write_bundle_with_scene(out, &spec, &scene)
        }
        None => fixture::write_bundle(out, &spec),
    }
    .map_err(|e| super::stage_err("synth", anyhow::anyhow!(e.to_string())))?;

    let mut manifest = ManifestBuilder::new("synth-scene", cfg, out)?;
    if let Some(scene_path) = &args.scene {
        manifest.input(scene_path)?;
    }
    for entry in walkdir::WalkDir::new(out).sort_by_file_name() {
        let entry = entry?;
        if entry.file_type().is_file() && entry.file_name() != "manifest.json" {
            manifest.output(entry.path());
        }
    }
    let _ = common;
    manifest.write()
}
