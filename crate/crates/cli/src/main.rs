//! `rgbd`: deterministic pipeline driver.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 pipeline-stage
//! error (the failing stage is named on stderr).

mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand};
use rgbd_core::config::PipelineConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rgbd", version, about = "Metric-depth curation and RGB-D condition tooling")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Worker threads for per-frame/per-camera parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Root RNG seed; overrides the config file seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline config file (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle (clouds, renders, masks, script).
    SynthScene(commands::synth::SynthArgs),
    /// Run the pseudo-ground-truth depth curation pipeline on a bundle.
    CurateDepth(commands::curate::CurateArgs),
    /// Render sparse RGB-D condition frames for a temporal offset or a
    /// lateral viewpoint shift.
    RenderCondition(commands::render_cond::RenderArgs),
    /// Laterally perturb an ego trajectory.
    GenTrajectory(commands::traj::TrajArgs),
    /// Run the self-supervised cycle-consistency round trip and emit
    /// training pairs.
    SccRoundtrip(commands::scc::SccArgs),
    /// Evaluate predicted depth against ground truth.
    EvalDepth(commands::eval::EvalArgs),
}

/// Errors that indicate a failing pipeline stage rather than bad input.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub source: anyhow::Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage '{}' failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub type CmdResult = Result<(), anyhow::Error>;

fn load_config(common: &CommonArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
            PipelineConfig::from_toml_str(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &CommonArgs) -> anyhow::Result<PathBuf> {
    common.out.clone().ok_or_else(|| anyhow::anyhow!("--out DIR is required"))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are success; everything else is input error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = run(&cli);
    match result {
        Ok(()) => {}
        Err(err) => {
            if let Some(stage) = err.downcast_ref::<StageError>() {
                eprintln!("error: {stage}");
                std::process::exit(2);
            }
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: &Cli) -> CmdResult {
    let cfg = load_config(&cli.common)?;
    let out = out_dir(&cli.common)?;
    match &cli.command {
        Command::SynthScene(args) => commands::synth::run(args, &cli.common, &cfg, &out),
        Command::CurateDepth(args) => commands::curate::run(args, &cli.common, &cfg, &out),
        Command::RenderCondition(args) => {
            commands::render_cond::run(args, &cli.common, &cfg, &out)
        }
        Command::GenTrajectory(args) => commands::traj::run(args, &cli.common, &cfg, &out),
        Command::SccRoundtrip(args) => commands::scc::run(args, &cli.common, &cfg, &out),
        Command::EvalDepth(args) => commands::eval::run(args, &cli.common, &cfg, &out),
    }
}
