use crate::manifest::ManifestBuilder;
use crate::{CmdResult, CommonArgs};
use anyhow::Context;
use clap::Args;
use rgbd_core::config::PipelineConfig;
use rgbd_core::io::{bundle::Bundle, json, pfm, png};
use rgbd_core::nvs::{self, NearestFillDensifier, OracleViewDensifier, ViewDensifier};
use rgbd_core::render::DepthRange;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct SccArgs {
    /// Input bundle directory (frames need rgb.png and depth.pfm).
    #[arg(long)]
    bundle: PathBuf,
    /// Frame index on the original trajectory.
    #[arg(long)]
    frame: usize,
    /// Lateral shift in meters defining the novel viewpoint.
    #[arg(long, allow_hyphen_values = true)]
    shift: f64,
    /// View densifier: nearest | oracle | external.
    #[arg(long, default_value = "nearest")]
    densifier: String,
    /// Command line for the external densifier (whitespace-split).
    #[arg(long)]
    densifier_cmd: Option<String>,
}

#[derive(Serialize)]
struct PairMeta {
    frame: usize,
    camera: String,
    /// Lateral shift in meters; cycle pairs are viewpoint-shifted.
    tau: f64,
    /// Temporal offset; always null for cycle pairs, present for schema
    /// parity with condition metadata.
    offset: Option<i64>,
    original_pose: [[f64; 4]; 4],
    novel_pose: [[f64; 4]; 4],
    densifier: String,
}

pub fn run(args: &SccArgs, common: &CommonArgs, cfg: &PipelineConfig, out: &Path) -> CmdResult {
    let bundle = Bundle::open(&args.bundle).context("opening bundle")?;
    let range = DepthRange::new(cfg.depth.min, cfg.depth.max)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let t = args.frame;
    if t >= bundle.frame_count() {
        anyhow::bail!("frame {t} out of range ({} frames)", bundle.frame_count());
    }
    let frame = bundle.rig_frame(t, range).context("loading rig frame")?;

    let densifier: Box<dyn ViewDensifier> = match args.densifier.as_str() {
        "nearest" => Box::new(NearestFillDensifier),
        "oracle" => {
            let mut scene = json::read_scene(&bundle.scene_path())
                .context("oracle densifier needs scene.json in the bundle")?;
            // The captured frames contain the dynamic objects, so the
            // analytic stand-in must contain them too.
            scene.primitives.extend(rgbd_core::fixture::script_box_primitives(
                &bundle.script.frames[t].boxes,
            ));
            Box::new(OracleViewDensifier::new(scene))
        }
        "external" => {
            let cmd = args.densifier_cmd.as_deref().ok_or_else(|| {
                anyhow::anyhow!("--densifier external requires --densifier-cmd")
            })?;
            let parts: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if parts.is_empty() {
                anyhow::bail!("--densifier-cmd is empty");
            }
            Box::new(nvs::ExternalViewDensifier::new(parts))
        }
        other => anyhow::bail!("unknown densifier '{other}' (nearest|oracle|external)"),
    };

    let cams = bundle.cameras_at(t)?;
    let ego = bundle.script.frames[t].ego_to_world;
    let novel = super::shift_cameras_lateral(&cams, &ego, args.shift);

    let trip = nvs::scc_roundtrip(&frame, &novel, densifier.as_ref(), range)
        .map_err(|e| super::stage_err("scc", anyhow::anyhow!(e.to_string())))?;

    let mut manifest = ManifestBuilder::new("scc-roundtrip", cfg, out)?;
    manifest.input_tree(&args.bundle)?;
    let names = bundle.camera_names();
    for ((pair, name), novel_pose) in trip.pairs.iter().zip(&names).zip(&novel) {
        let dir = out.join(format!("{t:04}")).join(name);
        for p in super::render_cond::write_condition(&dir, &pair.condition)? {
            manifest.output(&p);
        }
        let target_rgb = dir.join("target_rgb.png");
        let target_depth = dir.join("target_depth.pfm");
        png::write_rgb(&target_rgb, &pair.target_rgb)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        pfm::write(&target_depth, &pair.target_depth)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        manifest.output(&target_rgb);
        manifest.output(&target_depth);

        let idx = names.iter().position(|n| n == name).unwrap();
        let meta_path = dir.join("meta.json");
        json::write_json(
            &meta_path,
            &PairMeta {
                frame: t,
                camera: name.clone(),
                tau: args.shift,
                offset: None,
                original_pose: json::pose_to_rows(&frame.cameras[idx].pose),
                novel_pose: json::pose_to_rows(novel_pose),
                densifier: args.densifier.clone(),
            },
        )
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        manifest.output(&meta_path);
    }

    #[derive(Serialize)]
    struct ResidualsOut<'a> {
        pooled: &'a nvs::SccResiduals,
        per_camera: Vec<(&'a str, &'a nvs::SccResiduals)>,
    }
    let residuals_path = out.join("residuals.json");
    json::write_json(
        &residuals_path,
        &ResidualsOut {
            pooled: &trip.pooled,
            per_camera: names
                .iter()
                .map(String::as_str)
                .zip(trip.pairs.iter().map(|p| &p.residuals))
                .collect(),
        },
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    manifest.output(&residuals_path);
    log::info!(
        "scc frame {t} shift {}: rgb mae {:.6}, depth median abs err {:.6} m",
        args.shift,
        trip.pooled.rgb_mae,
        trip.pooled.depth_median_abs_err
    );
    let _ = common;
    manifest.write()
}
