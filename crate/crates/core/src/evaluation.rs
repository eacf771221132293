//! Detection matching, average precision, and the adversarial objective.
//!
//! The objective is a weighted sum of average precision at several IoU
//! thresholds, computed over the boxes inside a square window around the
//! ego agent. Lower is worse perception, so the search MINIMIZES it.
//!
//! AP here is the all-point (continuous) variant with right-max precision
//! interpolation: it changes smoothly as detections slide past IoU
//! thresholds, which keeps the black-box search landscape informative.

use crate::error::Error;
use crate::geometry::{obb_iou, OrientedBox};
use crate::perception::{detect, Detection, ModelConfig};
use crate::scene::Scene;
use crate::search::CollaborationChoice;
use serde_json::{json, Value};

/// Half-width in meters of the square evaluation window centered on ego.
pub const EVAL_RANGE: f64 = 48.0;

/// IoU thresholds with their loss weights; thresholds strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pairs: Vec<(f64, f64)>,
}

impl Default for LossWeights {
    /// Thresholds {0.3, 0.5, 0.7} weighted {1, 0.8, 0.5}.
    fn default() -> Self {
        LossWeights { pairs: vec![(0.3, 1.0), (0.5, 0.8), (0.7, 0.5)] }
    }
}

impl LossWeights {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self, Error> {
        if pairs.is_empty() {
            return Err(Error::InvariantViolation("loss weights must be non-empty".into()));
        }
        for w in pairs.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvariantViolation(
                    "loss thresholds must be strictly increasing".into(),
                ));
            }
        }
        for &(t, w) in &pairs {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvariantViolation(format!("threshold {t} outside (0,1)")));
            }
            if w <= 0.0 {
                return Err(Error::InvariantViolation(format!("weight {w} must be positive")));
            }
        }
        Ok(LossWeights { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.pairs.iter().map(|&(t, _)| t).collect()
    }

    /// The weighted sum over per-threshold AP values, in threshold order.
    pub fn weighted_sum(&self, aps: &[f64]) -> f64 {
        debug_assert_eq!(aps.len(), self.pairs.len());
        self.pairs.iter().zip(aps).map(|(&(_, w), &ap)| w * ap).sum()
    }
}

/// Scores for one scene evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// (threshold, AP) pairs in threshold order.
    pub ap: Vec<(f64, f64)>,
    pub l_adv: f64,
    pub n_gt: usize,
    pub n_det: usize,
}

impl EvalReport {
    pub fn ap_at(&self, t: f64) -> Option<f64> {
        self.ap.iter().find(|&&(tt, _)| tt == t).map(|&(_, ap)| ap)
    }

    pub fn to_json(&self) -> Value {
        let mut ap = serde_json::Map::new();
        for &(t, v) in &self.ap {
            ap.insert(format!("{t}"), json!(v));
        }
        json!({
            "ap": Value::Object(ap),
            "l_adv": self.l_adv,
            "n_gt": self.n_gt,
            "n_det": self.n_det,
        })
    }
}

/// Greedily matches detections to ground truth at IoU threshold `t`.
/// Detections are processed in descending confidence (ties by index); each
/// one takes the unmatched ground-truth box of highest IoU at or above `t`.
/// Returns a TP flag per detection, aligned with the input order.
pub fn match_detections(dets: &[Detection], gts: &[OrientedBox], t: f64) -> Vec<bool> {
    let order = rank_order(dets);
    let mut gt_used = vec![false; gts.len()];
    let mut labels = vec![false; dets.len()];
    for &di in &order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_used[gi] {
                continue;
            }
            let iou = obb_iou(&dets[di].bbox, gt);
            if iou >= t && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            gt_used[gi] = true;
            labels[di] = true;
        }
    }
    labels
}

/// Indices of `dets` in descending confidence, ties by ascending index.
fn rank_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].confidence.total_cmp(&dets[i].confidence).then(i.cmp(&j)));
    order
}

/// All-point average precision from TP/FP labels in rank order.
///
/// AP = sum over ranks of (recall step) * (interpolated precision), where
/// the interpolated precision at a rank is the maximum precision at that
/// rank or any later one. Conventions: 1 when both sides are empty, 0 when
/// there is nothing to recall or nothing recalled.
pub fn ap_from_labels(labels: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if labels.is_empty() { 1.0 } else { 0.0 };
    }
    if labels.is_empty() {
        return 0.0;
    }
    let n = labels.len();
    let mut tp = vec![0usize; n];
    let mut acc = 0usize;
    for (k, &hit) in labels.iter().enumerate() {
        if hit {
            acc += 1;
        }
        tp[k] = acc;
    }
    let mut pint = vec![0.0f64; n];
    let mut maxp = 0.0f64;
    for k in (0..n).rev() {
        let p = tp[k] as f64 / (k + 1) as f64;
        if p > maxp {
            maxp = p;
        }
        pint[k] = maxp;
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for k in 0..n {
        let r = tp[k] as f64 / n_gt as f64;
        ap += (r - prev_r) * pint[k];
        prev_r = r;
    }
    ap
}

/// Average precision of `dets` against `gts` at IoU threshold `t`.
pub fn average_precision(dets: &[Detection], gts: &[OrientedBox], t: f64) -> f64 {
    if gts.is_empty() {
        return if dets.is_empty() { 1.0 } else { 0.0 };
    }
    if dets.is_empty() {
        return 0.0;
    }
    let labels = match_detections(dets, gts, t);
    let ranked: Vec<bool> = rank_order(dets).into_iter().map(|i| labels[i]).collect();
    ap_from_labels(&ranked, gts.len())
}

/// Builds the full report for already-filtered detections and ground truth.
pub fn report_for(dets: &[Detection], gts: &[OrientedBox], weights: &LossWeights) -> EvalReport {
    let aps: Vec<f64> = weights.thresholds().iter().map(|&t| average_precision(dets, gts, t)).collect();
    let l_adv = weights.weighted_sum(&aps);
    EvalReport {
        ap: weights.thresholds().into_iter().zip(aps).collect(),
        l_adv,
        n_gt: gts.len(),
        n_det: dets.len(),
    }
}

fn in_range(cx: f64, cy: f64, ex: f64, ey: f64) -> bool {
    (cx - ex).abs() <= EVAL_RANGE && (cy - ey).abs() <= EVAL_RANGE
}

/// Runs the detector and scores it inside the evaluation window around ego.
/// Ground truth is every agent except the collaborators themselves (unless
/// the model is configured to score them too).
pub fn adversarial_loss(
    scene: &Scene,
    collab: &CollaborationChoice,
    model: &ModelConfig,
    weights: &LossWeights,
) -> Result<EvalReport, Error> {
    let dets = detect(scene, collab, model)?;
    let ego = scene.ego();
    let (ex, ey) = (ego.pose.x, ego.pose.y);

    let gts: Vec<OrientedBox> = scene
        .agents
        .iter()
        .filter(|a| model.collab_in_gt || !collab.members.contains(&a.id))
        .map(|a| a.footprint())
        .filter(|fp| in_range(fp.center.x, fp.center.y, ex, ey))
        .collect();
    let dets: Vec<Detection> = dets
        .into_iter()
        .filter(|d| in_range(d.bbox.center.x, d.bbox.center.y, ex, ey))
        .collect();

    Ok(report_for(&dets, &gts, weights))
}
