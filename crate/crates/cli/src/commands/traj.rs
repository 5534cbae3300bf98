use crate::manifest::ManifestBuilder;
use crate::{CmdResult, CommonArgs};
use anyhow::Context;
use clap::Args;
use rgbd_core::config::PipelineConfig;
use rgbd_core::io::json;
use rgbd_core::nvs::{perturb_trajectory, TauMode};
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct TrajArgs {
    /// Input trajectory JSON.
    #[arg(long)]
    input: PathBuf,
    /// Lateral shift lower bound in meters (config default when omitted).
    #[arg(long, allow_hyphen_values = true)]
    tau_min: Option<f64>,
    /// Lateral shift upper bound in meters (config default when omitted).
    #[arg(long, allow_hyphen_values = true)]
    tau_max: Option<f64>,
    /// Sample a single tau for the whole trajectory instead of per frame.
    #[arg(long)]
    per_trajectory: bool,
}

pub fn run(args: &TrajArgs, common: &CommonArgs, cfg: &PipelineConfig, out: &Path) -> CmdResult {
    let traj = json::read_trajectory(&args.input).context("reading trajectory")?;
    let lo = args.tau_min.unwrap_or(cfg.nvs.tau_min);
    let hi = args.tau_max.unwrap_or(cfg.nvs.tau_max);
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
        anyhow::bail!("invalid tau range [{lo}, {hi}]");
    }
    let mode = if args.per_trajectory || !cfg.nvs.per_frame_tau {
        TauMode::PerTrajectory
    } else {
        TauMode::PerFrame
    };
    let novel = perturb_trajectory(&traj, cfg.seed, (lo, hi), mode);

    let out_path = out.join("trajectory.json");
    json::write_trajectory(&out_path, &novel).map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let mut manifest = ManifestBuilder::new("gen-trajectory", cfg, out)?;
    manifest.input(&args.input)?;
    manifest.output(&out_path);
    let _ = common;
    manifest.write()
}
