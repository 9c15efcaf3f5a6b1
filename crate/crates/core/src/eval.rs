//! Object-level evaluation: spatial-temporal IoU matching of predicted
//! clips against ground truth, then precision / recall / F-measure, AP and
//! ROC AUC. Frame-level metrics for keyframe-style benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::pipeline::{BoundingBox, FrameRange};

pub const DEFAULT_PHI: f64 = 0.1;
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthClip {
    pub frames: FrameRange,
    pub b_start: BoundingBox,
    pub b_end: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedClip {
    pub frames: FrameRange,
    pub b_start: BoundingBox,
    pub b_end: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// `None` when no prediction matched a ground-truth clip.
    pub ap: Option<f64>,
    /// `None` when the predictions are all matched or all unmatched.
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Intersection over union of two inclusive frame ranges, counting frames.
pub fn temporal_iou(a: FrameRange, b: FrameRange) -> f64 {
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    let inter = if lo <= hi { hi - lo + 1 } else { 0 };
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Area IoU of two rectangles.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Mean of the start-box IoU and the end-box IoU.
pub fn spatial_iou(
    p_start: &BoundingBox,
    p_end: &BoundingBox,
    g_start: &BoundingBox,
    g_end: &BoundingBox,
) -> f64 {
    0.5 * (box_iou(p_start, g_start) + box_iou(p_end, g_end))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Per prediction, in input order: matched to a ground-truth clip.
    pub is_tp: Vec<bool>,
    /// Per ground-truth clip, in input order.
    pub gt_matched: Vec<bool>,
}

/// Greedy one-to-one matching. Predictions are visited by descending score
/// (input order on ties); each takes the unmatched ground-truth clip with
/// the largest mean of temporal and spatial IoU among those where both
/// IoUs exceed `phi`.
pub fn match_clips(preds: &[PredictedClip], gts: &[GroundTruthClip], phi: f64) -> Matching {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut is_tp = vec![false; preds.len()];
    let mut gt_matched = vec![false; gts.len()];
    for pi in order {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if gt_matched[gi] {
                continue;
            }
            let tem = temporal_iou(p.frames, g.frames);
            let spa = spatial_iou(&p.b_start, &p.b_end, &g.b_start, &g.b_end);
            if tem > phi && spa > phi {
                let q = (tem + spa) / 2.0;
                if best.is_none_or(|(_, bq)| q > bq) {
                    best = Some((gi, q));
                }
            }
        }
        if let Some((gi, _)) = best {
            gt_matched[gi] = true;
            is_tp[pi] = true;
        }
    }
    Matching { is_tp, gt_matched }
}

/// Precision, recall and F-measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// `2PR / (P + R)`, 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Binarizes scores at `score >= tau`. Precision is over predictions kept,
/// recall over `gt_count`; empty denominators give 0.
pub fn precision_recall_f(scored: &[(f64, bool)], gt_count: usize, tau: f64) -> Prf {
    let selected = scored.iter().filter(|(s, _)| *s >= tau).count();
    let hits = scored.iter().filter(|(s, tp)| *s >= tau && *tp).count();
    let precision = if selected == 0 {
        0.0
    } else {
        hits as f64 / selected as f64
    };
    let recall = if gt_count == 0 {
        0.0
    } else {
        hits as f64 / gt_count as f64
    };
    Prf {
        precision,
        recall,
        f_measure: f_measure(precision, recall),
    }
}

/// Ranked by descending score, input order on ties.
fn ranking(scored: &[(f64, bool)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    order
}

/// Non-interpolated AP: the mean, over positives, of the precision at each
/// positive's rank.
pub fn average_precision(scored: &[(f64, bool)]) -> Result<f64> {
    let positives = scored.iter().filter(|s| s.1).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric(
            "average precision without positives",
        ));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in ranking(scored).iter().enumerate() {
        if scored[i].1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Mann-Whitney AUC from mid-ranks: the probability that a positive
/// outscores a negative, ties counting one half.
pub fn roc_auc(scored: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scored.iter().filter(|s| s.1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    // Ranks doubled so tie averages stay integral.
    let mut pos_rank_sum2 = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| scored[k].1).count() as u64;
        pos_rank_sum2 += mid2 * pos_in_tie;
        i = j + 1;
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f_measure: f64,
}

/// Frame-level precision, true and false positive rate and F-measure of
/// `score >= tau` against binary labels.
pub fn frame_metrics(scores: &[f64], labels: &[bool], tau: f64) -> Result<FrameMetrics> {
    check_dim("frame labels", scores.len(), labels.len())?;
    let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= tau;
        pos += l as usize;
        tp += (predicted && l) as usize;
        fp += (predicted && !l) as usize;
    }
    let neg = labels.len() - pos;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, pos);
    Ok(FrameMetrics {
        precision,
        recall,
        fpr: ratio(fp, neg),
        f_measure: f_measure(precision, recall),
    })
}

/// Per-frame labels: a frame is positive when any ground-truth clip covers it.
pub fn frame_labels(gts: &[GroundTruthClip], total_frames: usize) -> Vec<bool> {
    let mut labels = vec![false; total_frames];
    for g in gts {
        let end = g.frames.end.min(total_frames.saturating_sub(1));
        if g.frames.start <= end {
            labels[g.frames.start..=end].fill(true);
        }
    }
    labels
}

/// Full object-level evaluation of one video.
pub fn evaluate(
    preds: &[PredictedClip],
    gts: &[GroundTruthClip],
    phi: f64,
    tau: f64,
) -> EvalReport {
    let m = match_clips(preds, gts, phi);
    let scored: Vec<(f64, bool)> = preds
        .iter()
        .map(|p| p.score)
        .zip(m.is_tp.iter().copied())
        .collect();
    let prf = precision_recall_f(&scored, gts.len(), tau);
    let tp = m.is_tp.iter().filter(|&&t| t).count();
    EvalReport {
        precision: prf.precision,
        recall: prf.recall,
        f_measure: prf.f_measure,
        ap: average_precision(&scored).ok(),
        auc: roc_auc(&scored).ok(),
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
    }
}
