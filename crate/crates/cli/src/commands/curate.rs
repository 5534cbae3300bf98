use crate::manifest::ManifestBuilder;
use crate::{CmdResult, CommonArgs};
use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use rgbd_core::config::PipelineConfig;
use rgbd_core::curation::{
    self, DensifierBackend, ExternalDensifier, MedianDensifier, OracleDensifier,
};
use rgbd_core::io::{bundle::Bundle, json, pfm, png};
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct CurateArgs {
    /// Input bundle directory.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Frame index to curate; all frames when omitted.
    #[arg(long)]
    pub frame: Option<usize>,
    /// Completion backend: default | oracle | external.
    #[arg(long, default_value = "default")]
    pub densifier: String,
    /// Command line for the external backend (whitespace-split).
    #[arg(long)]
    pub densifier_cmd: Option<String>,
    /// Also export lossy 16-bit millimeter PNGs.
    #[arg(long)]
    pub png16: bool,
}

pub fn make_backend(
    name: &str,
    cmd: Option<&str>,
    bundle: &Bundle,
) -> anyhow::Result<Box<dyn DensifierBackend>> {
    match name {
        "default" => Ok(Box::new(MedianDensifier)),
        "oracle" => {
            let scene = json::read_scene(&bundle.scene_path())
                .context("oracle densifier needs scene.json in the bundle")?;
            Ok(Box::new(OracleDensifier::new(scene)))
        }
        "external" => {
            let cmd = cmd.ok_or_else(|| {
                anyhow::anyhow!("--densifier external requires --densifier-cmd")
            })?;
            let parts: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if parts.is_empty() {
                anyhow::bail!("--densifier-cmd is empty");
            }
            Ok(Box::new(ExternalDensifier::new(parts)))
        }
        other => anyhow::bail!("unknown densifier '{other}' (default|oracle|external)"),
    }
}

pub fn run(args: &CurateArgs, common: &CommonArgs, cfg: &PipelineConfig, out: &Path) -> CmdResult {
    let bundle = Bundle::open(&args.bundle).context("opening bundle")?;
    let backend = make_backend(&args.densifier, args.densifier_cmd.as_deref(), &bundle)?;
    let frames: Vec<usize> = match args.frame {
        Some(t) => {
            if t >= bundle.frame_count() {
                anyhow::bail!("frame {t} out of range ({} frames)", bundle.frame_count());
            }
            vec![t]
        }
        None => (0..bundle.frame_count()).collect(),
    };

    let pool = super::thread_pool(common.jobs)?;
    let backend_ref: &dyn DensifierBackend = backend.as_ref();
    let outputs: Vec<Vec<PathBuf>> = pool.install(|| {
        frames
            .par_iter()
            .map(|&t| curate_frame(&bundle, cfg, backend_ref, t, out, args.png16))
            .collect::<Result<Vec<_>, anyhow::Error>>()
    })?;

    let mut manifest = ManifestBuilder::new("curate-depth", cfg, out)?;
    manifest.input_tree(&args.bundle)?;
    for paths in &outputs {
        for p in paths {
            manifest.output(p);
        }
    }
    manifest.write()
}

pub fn curate_frame(
    bundle: &Bundle,
    cfg: &PipelineConfig,
    backend: &dyn DensifierBackend,
    t: usize,
    out: &Path,
    png16: bool,
) -> Result<Vec<PathBuf>, anyhow::Error> {
    log::info!("curating frame {t}");
    let loaded = bundle
        .load_curation_frame(t, cfg.curation.lidar_window)
        .with_context(|| format!("loading frame {t}"))?;
    let dense = curation::curate(&loaded.as_inputs(), cfg, backend)
        .map_err(super::curation_stage_err)?;

    let mut written = Vec::new();
    for (frame, name) in dense.iter().zip(&loaded.camera_names) {
        let dir = out.join("frames").join(format!("{t:04}")).join(name);
        let depth_path = dir.join("depth.pfm");
        pfm::write(&depth_path, frame).map_err(|e| anyhow::anyhow!(e.to_string()))?;
        written.push(depth_path);
        if png16 {
            let p16 = dir.join("depth16.png");
            png::write_depth16(&p16, frame).map_err(|e| anyhow::anyhow!(e.to_string()))?;
            written.push(p16);
        }
    }
    Ok(written)
}
