use crate::manifest::ManifestBuilder;
use crate::{CmdResult, CommonArgs};
use anyhow::Context;
use clap::Args;
use rgbd_core::config::PipelineConfig;
use rgbd_core::io::{json, pfm};
use rgbd_core::metrics::{
    eval_sequence, format_report_table, EvalRange, Scaling, SequenceEvalReport,
};
use rgbd_core::render::{DepthFrame, DepthRange};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted depth: a .pfm file or a directory of them.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth depth: a .pfm file or a directory mirroring --pred.
    #[arg(long)]
    gt: PathBuf,
    /// Median scaling: none | median | both.
    #[arg(long, default_value = "both")]
    scaling: String,
    /// Also report the unweighted mean of the per-frame statistics.
    #[arg(long)]
    frame_averaged: bool,
}

/// Collect .pfm files under a path: a single file, or a sorted recursive
/// listing keyed by relative path.
fn collect_pfms(root: &Path) -> anyhow::Result<Vec<(String, PathBuf)>> {
    if root.is_file() {
        return Ok(vec![(root.file_name().unwrap().to_string_lossy().into_owned(), root.into())]);
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry?;
        if entry.file_type().is_file()
            && entry.path().extension().is_some_and(|e| e == "pfm")
        {
            let rel = entry.path().strip_prefix(root).unwrap().display().to_string();
            out.push((rel, entry.into_path()));
        }
    }
    out.sort();
    if out.is_empty() {
        anyhow::bail!("no .pfm files under {}", root.display());
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalOutput {
    range_min: f64,
    range_max: f64,
    with_median_scaling: Option<SequenceEvalReport>,
    without_scaling: Option<SequenceEvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame_averaged_with_median_scaling: Option<rgbd_core::metrics::DepthEvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame_averaged_without_scaling: Option<rgbd_core::metrics::DepthEvalReport>,
}

pub fn run(args: &EvalArgs, common: &CommonArgs, cfg: &PipelineConfig, out: &Path) -> CmdResult {
    let preds = collect_pfms(&args.pred)?;
    let gts = collect_pfms(&args.gt)?;
    if preds.len() != gts.len() {
        anyhow::bail!("{} prediction files vs {} ground-truth files", preds.len(), gts.len());
    }
    for ((pn, _), (gn, _)) in preds.iter().zip(&gts) {
        if preds.len() > 1 && pn != gn {
            anyhow::bail!("file mismatch: pred '{pn}' vs gt '{gn}'");
        }
    }

    // Wide storage range: the evaluation range does the masking.
    let storage = DepthRange::new(1e-9, 1e12).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut pred_frames: Vec<DepthFrame> = Vec::with_capacity(preds.len());
    let mut gt_frames: Vec<DepthFrame> = Vec::with_capacity(gts.len());
    for (_, p) in &preds {
        pred_frames.push(pfm::read(p, storage).with_context(|| format!("{}", p.display()))?);
    }
    for (_, p) in &gts {
        gt_frames.push(pfm::read(p, storage).with_context(|| format!("{}", p.display()))?);
    }
    let pred_refs: Vec<&DepthFrame> = pred_frames.iter().collect();
    let gt_refs: Vec<&DepthFrame> = gt_frames.iter().collect();
    let range = EvalRange { min: cfg.eval.range_min, max: cfg.eval.range_max };

    let stage = |e: rgbd_core::metrics::MetricsError| {
        super::stage_err("eval", anyhow::anyhow!(e.to_string()))
    };
    let (with, without) = match args.scaling.as_str() {
        "none" => (None, Some(eval_sequence(&pred_refs, &gt_refs, range, Scaling::None).map_err(stage)?)),
        "median" => {
            (Some(eval_sequence(&pred_refs, &gt_refs, range, Scaling::Median).map_err(stage)?), None)
        }
        "both" => (
            Some(eval_sequence(&pred_refs, &gt_refs, range, Scaling::Median).map_err(stage)?),
            Some(eval_sequence(&pred_refs, &gt_refs, range, Scaling::None).map_err(stage)?),
        ),
        other => anyhow::bail!("unknown scaling '{other}' (none|median|both)"),
    };

    let averaged = |seq: &Option<SequenceEvalReport>| {
        if args.frame_averaged {
            seq.as_ref().and_then(|s| s.frame_averaged())
        } else {
            None
        }
    };
    let report_json = out.join("report.json");
    json::write_json(
        &report_json,
        &EvalOutput {
            range_min: range.min,
            range_max: range.max,
            frame_averaged_with_median_scaling: averaged(&with),
            frame_averaged_without_scaling: averaged(&without),
            with_median_scaling: with.clone(),
            without_scaling: without.clone(),
        },
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let table = match (&with, &without) {
        (Some(w), Some(wo)) => format_report_table(&w.pooled, &wo.pooled),
        (Some(w), None) => format_report_table(&w.pooled, &w.pooled),
        (None, Some(wo)) => format_report_table(&wo.pooled, &wo.pooled),
        (None, None) => unreachable!(),
    };
    let report_txt = out.join("report.txt");
    rgbd_core::io::atomic_write(&report_txt, table.as_bytes())
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    print!("{table}");

    let mut manifest = ManifestBuilder::new("eval-depth", cfg, out)?;
    for (_, p) in preds.iter().chain(&gts) {
        manifest.input(p)?;
    }
    manifest.output(&report_json);
    manifest.output(&report_txt);
    let _ = common;
    manifest.write()
}
