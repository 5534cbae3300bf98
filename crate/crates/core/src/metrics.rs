//! Depth evaluation: absolute relative error, RMSE, and threshold accuracies,
//! with or without median scaling, over configurable validity masks.

use crate::render::DepthFrame;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("raster size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("no pixel is valid in both rasters within the evaluation range")]
    EmptyOverlap,
    #[error("non-positive ground-truth depth {0} in the evaluation set")]
    NonPositiveGt(f64),
    #[error("non-positive predicted depth {0} in the evaluation set (median scaling)")]
    NonPositivePred(f64),
    #[error("frame count mismatch: {0} predictions vs {1} ground truths")]
    FrameCountMismatch(usize, usize),
}

/// Whether predictions are rescaled by the median of gt/pred before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    None,
    Median,
}

/// Evaluation interval: ground truth must satisfy min < gt <= max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRange {
    pub min: f64,
    pub max: f64,
}

impl EvalRange {
    pub fn contains(&self, d: f64) -> bool {
        d > self.min && d <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthEvalReport {
    pub abs_rel: f64,
    pub rmse: f64,
    /// Fraction with max(pred/gt, gt/pred) < 1.25.
    pub delta1: f64,
    /// Fraction with max(pred/gt, gt/pred) < 1.25^2.
    pub delta2: f64,
    pub n_pixels: usize,
    pub scaling: Scaling,
    /// Median of gt/pred applied to predictions (1.0 when scaling is off).
    pub scale_factor: f64,
}

/// Pixel pairs (pred, gt) shared by both rasters and inside the range.
fn joint_pixels(
    pred: &DepthFrame,
    gt: &DepthFrame,
    range: EvalRange,
) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(MetricsError::SizeMismatch(
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height(),
        ));
    }
    let mut ps = Vec::new();
    let mut gs = Vec::new();
    for i in 0..pred.len() {
        if !pred.valid_data()[i] || !gt.valid_data()[i] {
            continue;
        }
        let g = gt.depth_data()[i];
        if !range.contains(g) {
            continue;
        }
        if g <= 0.0 {
            return Err(MetricsError::NonPositiveGt(g));
        }
        ps.push(pred.depth_data()[i]);
        gs.push(g);
    }
    Ok((ps, gs))
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn score(
    preds: &[f64],
    gts: &[f64],
    scaling: Scaling,
) -> Result<DepthEvalReport, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyOverlap);
    }
    let scale_factor = match scaling {
        Scaling::None => 1.0,
        Scaling::Median => {
            let mut ratios = Vec::with_capacity(preds.len());
            for (&p, &g) in preds.iter().zip(gts) {
                if p <= 0.0 {
                    return Err(MetricsError::NonPositivePred(p));
                }
                ratios.push(g / p);
            }
            median_of(ratios)
        }
    };
    let n = preds.len() as f64;
    let mut abs_rel = 0.0f64;
    let mut sq = 0.0f64;
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    const T1: f64 = 1.25;
    const T2: f64 = 1.25 * 1.25;
    for (&p0, &g) in preds.iter().zip(gts) {
        let p = p0 * scale_factor;
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq += diff * diff;
        let ratio = (p / g).max(g / p);
        if ratio < T1 {
            d1 += 1;
        }
        if ratio < T2 {
            d2 += 1;
        }
    }
    Ok(DepthEvalReport {
        abs_rel: abs_rel / n,
        rmse: (sq / n).sqrt(),
        delta1: d1 as f64 / n,
        delta2: d2 as f64 / n,
        n_pixels: preds.len(),
        scaling,
        scale_factor,
    })
}

/// Evaluate one prediction raster against ground truth over the joint-valid,
/// in-range pixel set.
pub fn eval_depth(
    pred: &DepthFrame,
    gt: &DepthFrame,
    range: EvalRange,
    scaling: Scaling,
) -> Result<DepthEvalReport, MetricsError> {
    let (ps, gs) = joint_pixels(pred, gt, range)?;
    score(&ps, &gs, scaling)
}

#[derive(Debug, Clone, Serialize)]
pub struct SequenceEvalReport {
    /// Pixel-pooled statistics over all frames (single pass over the union
    /// pixel set; with median scaling the scale factor is pooled too).
    pub pooled: DepthEvalReport,
    pub per_frame: Vec<DepthEvalReport>,
}

impl SequenceEvalReport {
    /// Frame-averaged aggregate: the unweighted mean of the per-frame
    /// statistics (the alternative to pixel pooling). `n_pixels` still counts
    /// pixels; the scale factor is the mean of the per-frame factors.
    pub fn frame_averaged(&self) -> Option<DepthEvalReport> {
        if self.per_frame.is_empty() {
            return None;
        }
        let n = self.per_frame.len() as f64;
        let mut out = DepthEvalReport {
            abs_rel: 0.0,
            rmse: 0.0,
            delta1: 0.0,
            delta2: 0.0,
            n_pixels: 0,
            scaling: self.pooled.scaling,
            scale_factor: 0.0,
        };
        for r in &self.per_frame {
            out.abs_rel += r.abs_rel;
            out.rmse += r.rmse;
            out.delta1 += r.delta1;
            out.delta2 += r.delta2;
            out.n_pixels += r.n_pixels;
            out.scale_factor += r.scale_factor;
        }
        out.abs_rel /= n;
        out.rmse /= n;
        out.delta1 /= n;
        out.delta2 /= n;
        out.scale_factor /= n;
        Some(out)
    }
}

/// Evaluate a sequence of (pred, gt) raster pairs: pooled over all pixels,
/// plus one per-frame report.
pub fn eval_sequence(
    preds: &[&DepthFrame],
    gts: &[&DepthFrame],
    range: EvalRange,
    scaling: Scaling,
) -> Result<SequenceEvalReport, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::FrameCountMismatch(preds.len(), gts.len()));
    }
    let mut all_p = Vec::new();
    let mut all_g = Vec::new();
    let mut per_frame = Vec::with_capacity(preds.len());
    for (pred, gt) in preds.iter().zip(gts) {
        let (ps, gs) = joint_pixels(pred, gt, range)?;
        if !ps.is_empty() {
            per_frame.push(score(&ps, &gs, scaling)?);
        }
        all_p.extend_from_slice(&ps);
        all_g.extend_from_slice(&gs);
    }
    let pooled = score(&all_p, &all_g, scaling)?;
    Ok(SequenceEvalReport { pooled, per_frame })
}

/// Plain-text table with one row per metric and `with / without` median
/// scaling columns.
pub fn format_report_table(with: &DepthEvalReport, without: &DepthEvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>18}\n",
        "Metric", "with / without median scaling"
    ));
    out.push_str(&format!(
        "{:<12} {:>8.4} / {:<8.4}\n",
        "Abs.Rel.", with.abs_rel, without.abs_rel
    ));
    out.push_str(&format!("{:<12} {:>8.4} / {:<8.4}\n", "RMSE", with.rmse, without.rmse));
    out.push_str(&format!(
        "{:<12} {:>8.4} / {:<8.4}\n",
        "d<1.25", with.delta1, without.delta1
    ));
    out.push_str(&format!(
        "{:<12} {:>8.4} / {:<8.4}\n",
        "d<1.25^2", with.delta2, without.delta2
    ));
    out.push_str(&format!(
        "{:<12} {:>8} pixels, scale {:.6}\n",
        "n", with.n_pixels, with.scale_factor
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::DepthRange;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn eval_range() -> EvalRange {
        EvalRange { min: 0.1, max: 100.0 }
    }

    fn frame_from(values: &[f64], w: usize, h: usize) -> DepthFrame {
        // Wide storage range: validity masking is exercised through the
        // evaluation range, not the frame range.
        DepthFrame::from_raw_sanitized(w, h, values.to_vec(), DepthRange::new(1e-9, 1e9).unwrap())
    }

    fn random_frames(
        rng: &mut StdRng,
        w: usize,
        h: usize,
    ) -> (DepthFrame, DepthFrame) {
        let pred: Vec<f64> = (0..w * h)
            .map(|_| if rng.gen_bool(0.8) { rng.gen_range(0.5..90.0) } else { 0.0 })
            .collect();
        let gt: Vec<f64> = (0..w * h)
            .map(|_| if rng.gen_bool(0.8) { rng.gen_range(0.5..90.0) } else { 0.0 })
            .collect();
        (frame_from(&pred, w, h), frame_from(&gt, w, h))
    }

    #[test]
    fn identity_prediction_scores_perfectly() {
        let mut rng = StdRng::seed_from_u64(3);
        let (_, gt) = random_frames(&mut rng, 16, 16);
        for scaling in [Scaling::None, Scaling::Median] {
            let r = eval_depth(&gt, &gt, eval_range(), scaling).unwrap();
            assert_eq!(r.abs_rel, 0.0);
            assert_eq!(r.rmse, 0.0);
            assert_eq!(r.delta1, 1.0);
            assert_eq!(r.delta2, 1.0);
            assert_eq!(r.scale_factor, 1.0);
        }
    }

    #[test]
    fn doubled_prediction_matches_closed_form() {
        let gt_vals: Vec<f64> = (1..=64).map(|i| i as f64).collect();
        let pred_vals: Vec<f64> = gt_vals.iter().map(|g| 2.0 * g).collect();
        let gt = frame_from(&gt_vals, 8, 8);
        let pred = frame_from(&pred_vals, 8, 8);

        let r = eval_depth(&pred, &gt, eval_range(), Scaling::None).unwrap();
        assert_eq!(r.abs_rel, 1.0);
        assert_eq!(r.delta1, 0.0);
        assert_eq!(r.delta2, 0.0); // ratio 2 >= 1.5625

        let r = eval_depth(&pred, &gt, eval_range(), Scaling::Median).unwrap();
        assert_eq!(r.scale_factor, 0.5);
        assert_eq!(r.abs_rel, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.delta1, 1.0);
        assert_eq!(r.delta2, 1.0);
    }

    #[test]
    fn deltas_are_ordered() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let (pred, gt) = random_frames(&mut rng, 12, 12);
            if let Ok(r) = eval_depth(&pred, &gt, eval_range(), Scaling::None) {
                assert!(r.delta1 <= r.delta2);
                assert!(r.n_pixels >= 1);
            }
        }
    }

    #[test]
    fn matches_bruteforce_recomputation() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let (pred, gt) = random_frames(&mut rng, 32, 32);
            for scaling in [Scaling::None, Scaling::Median] {
                let r = match eval_depth(&pred, &gt, eval_range(), scaling) {
                    Ok(r) => r,
                    Err(MetricsError::EmptyOverlap) => continue,
                    Err(e) => panic!("{e}"),
                };
                // Independent naive recomputation.
                let mut pairs: Vec<(f64, f64)> = Vec::new();
                for i in 0..pred.len() {
                    let (p, g) = (pred.depth_data()[i], gt.depth_data()[i]);
                    if p != 0.0 && g != 0.0 && g > 0.1 && g <= 100.0 {
                        pairs.push((p, g));
                    }
                }
                let s = match scaling {
                    Scaling::None => 1.0,
                    Scaling::Median => {
                        let mut ratios: Vec<f64> =
                            pairs.iter().map(|(p, g)| g / p).collect();
                        ratios.sort_by(f64::total_cmp);
                        let n = ratios.len();
                        if n % 2 == 1 {
                            ratios[n / 2]
                        } else {
                            (ratios[n / 2 - 1] + ratios[n / 2]) / 2.0
                        }
                    }
                };
                let n = pairs.len() as f64;
                let abs_rel =
                    pairs.iter().map(|(p, g)| (p * s - g).abs() / g).sum::<f64>() / n;
                let rmse = (pairs.iter().map(|(p, g)| (p * s - g).powi(2)).sum::<f64>() / n)
                    .sqrt();
                let d1 = pairs
                    .iter()
                    .filter(|(p, g)| (p * s / g).max(g / (p * s)) < 1.25)
                    .count() as f64
                    / n;
                let d2 = pairs
                    .iter()
                    .filter(|(p, g)| (p * s / g).max(g / (p * s)) < 1.5625)
                    .count() as f64
                    / n;
                assert!((r.abs_rel - abs_rel).abs() < 1e-12);
                assert!((r.rmse - rmse).abs() < 1e-12);
                assert!((r.delta1 - d1).abs() < 1e-12);
                assert!((r.delta2 - d2).abs() < 1e-12);
                assert_eq!(r.n_pixels, pairs.len());
            }
        }
    }

    #[test]
    fn median_scaling_absorbs_global_prediction_scale() {
        let mut rng = StdRng::seed_from_u64(6);
        let (pred, gt) = random_frames(&mut rng, 24, 24);
        let base = eval_depth(&pred, &gt, eval_range(), Scaling::Median).unwrap();
        for c in [0.1, 3.0, 17.0] {
            let scaled_vals: Vec<f64> =
                pred.depth_data().iter().map(|&d| if d == 0.0 { 0.0 } else { d * c }).collect();
            let scaled = frame_from(&scaled_vals, 24, 24);
            let r = eval_depth(&scaled, &gt, eval_range(), Scaling::Median).unwrap();
            assert!((r.abs_rel - base.abs_rel).abs() < 1e-12, "c={c}");
            assert!((r.rmse - base.rmse).abs() < 1e-12, "c={c}");
            assert!((r.delta1 - base.delta1).abs() < 1e-12, "c={c}");
            assert!((r.delta2 - base.delta2).abs() < 1e-12, "c={c}");
            assert!((r.scale_factor * c - base.scale_factor).abs() < 1e-9, "c={c}");
        }
    }

    #[test]
    fn joint_rescaling_invariance() {
        let mut rng = StdRng::seed_from_u64(7);
        let (pred, gt) = random_frames(&mut rng, 16, 16);
        let base = eval_depth(&pred, &gt, eval_range(), Scaling::None).unwrap();
        let c = 1.75;
        let ps: Vec<f64> = pred.depth_data().iter().map(|&d| d * c).collect();
        let gs: Vec<f64> = gt.depth_data().iter().map(|&d| d * c).collect();
        let pred_c = frame_from(&ps, 16, 16);
        let gt_c = frame_from(&gs, 16, 16);
        // Keep the evaluation range wide open so the mask is unchanged.
        let wide = EvalRange { min: 1e-6, max: 1e6 };
        let base_wide = eval_depth(&pred, &gt, wide, Scaling::None).unwrap();
        let r = eval_depth(&pred_c, &gt_c, wide, Scaling::None).unwrap();
        assert!((r.abs_rel - base_wide.abs_rel).abs() < 1e-12);
        assert!((r.delta1 - base_wide.delta1).abs() < 1e-12);
        assert!((r.delta2 - base_wide.delta2).abs() < 1e-12);
        assert!((r.rmse - c * base_wide.rmse).abs() < 1e-9);
        let _ = base;
    }

    #[test]
    fn empty_overlap_is_an_error() {
        let a = frame_from(&[0.0, 1.0], 2, 1);
        let b = frame_from(&[1.0, 0.0], 2, 1);
        assert_eq!(
            eval_depth(&a, &b, eval_range(), Scaling::None),
            Err(MetricsError::EmptyOverlap)
        );
    }

    #[test]
    fn sequence_pooling_matches_single_frame_and_is_idempotent() {
        let mut rng = StdRng::seed_from_u64(8);
        let (pred, gt) = random_frames(&mut rng, 16, 16);
        let single = eval_depth(&pred, &gt, eval_range(), Scaling::Median).unwrap();
        let seq =
            eval_sequence(&[&pred], &[&gt], eval_range(), Scaling::Median).unwrap();
        assert_eq!(seq.pooled, single);
        assert_eq!(seq.per_frame.len(), 1);

        // Two identical frames pool to the single-frame result.
        let seq2 =
            eval_sequence(&[&pred, &pred], &[&gt, &gt], eval_range(), Scaling::Median).unwrap();
        assert!((seq2.pooled.abs_rel - single.abs_rel).abs() < 1e-12);
        assert!((seq2.pooled.rmse - single.rmse).abs() < 1e-12);
        assert_eq!(seq2.pooled.n_pixels, 2 * single.n_pixels);
    }

    #[test]
    fn sequence_pooling_is_pixel_weighted() {
        // Disjoint error patterns: pooled abs_rel is the pixel-weighted mean,
        // while the frame-averaged aggregate weights frames equally.
        let gt_a = frame_from(&[10.0, 10.0, 10.0, 10.0], 2, 2);
        let pred_a = frame_from(&[11.0, 11.0, 11.0, 11.0], 2, 2); // abs_rel 0.1
        let gt_b = frame_from(&[10.0, 0.0, 0.0, 0.0], 2, 2);
        let pred_b = frame_from(&[15.0, 0.0, 0.0, 0.0], 2, 2); // abs_rel 0.5, 1 px
        let seq = eval_sequence(
            &[&pred_a, &pred_b],
            &[&gt_a, &gt_b],
            eval_range(),
            Scaling::None,
        )
        .unwrap();
        let expected = (0.1 * 4.0 + 0.5) / 5.0;
        assert!((seq.pooled.abs_rel - expected).abs() < 1e-12);
        assert_eq!(seq.per_frame.len(), 2);

        let averaged = seq.frame_averaged().unwrap();
        assert!((averaged.abs_rel - (0.1 + 0.5) / 2.0).abs() < 1e-12);
        assert_eq!(averaged.n_pixels, 5);
    }

    #[test]
    fn table_formatting_mentions_both_scalings() {
        let gt = frame_from(&[5.0; 4], 2, 2);
        let with = eval_depth(&gt, &gt, eval_range(), Scaling::Median).unwrap();
        let without = eval_depth(&gt, &gt, eval_range(), Scaling::None).unwrap();
        let table = format_report_table(&with, &without);
        assert!(table.contains("Abs.Rel."));
        assert!(table.contains("with / without"));
        assert!(table.contains("RMSE"));
    }
}
