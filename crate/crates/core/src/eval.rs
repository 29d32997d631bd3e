//! Proposal recall under a per-image budget and discrete ROC curves.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{ensure_arg, Error, Result};
use crate::geometry::{iou, BBox, ScoredCandidate};

/// A scored box in original-image coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
}

impl From<ScoredCandidate> for Detection {
    fn from(c: ScoredCandidate) -> Self {
        Self {
            bbox: c.bbox,
            score: c.score,
        }
    }
}

pub fn to_detections(cands: &[ScoredCandidate]) -> Vec<Detection> {
    cands.iter().map(|&c| c.into()).collect()
}

fn by_score_desc(a: &Detection, b: &Detection) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal)
}

fn check_inputs(dets: &[Vec<Detection>], gts: &[Vec<BBox>], iou_thresh: f64) -> Result<usize> {
    ensure_arg!(
        dets.len() == gts.len(),
        "{} detection lists for {} images",
        dets.len(),
        gts.len()
    );
    ensure_arg!((0.0..=1.0).contains(&iou_thresh), "IoU threshold must be in [0,1]");
    let total: usize = gts.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::invalid("no ground-truth boxes: recall is undefined"));
    }
    Ok(total)
}

/// Greedy one-to-one matching of one image's detections, visited in
/// descending score order (stable). Returns, per visited detection, whether
/// it matched a previously unmatched ground truth with IoU above
/// `iou_thresh` (the best-overlapping such ground truth is taken).
fn match_image(dets: &[Detection], gts: &[BBox], iou_thresh: f64) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| by_score_desc(&dets[a], &dets[b]).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|i| {
            let mut best: Option<(f64, usize)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let v = iou(&dets[i].bbox, gt);
                if v > iou_thresh && best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, g));
                }
            }
            if let Some((_, g)) = best {
                taken[g] = true;
            }
            (dets[i].score, best.is_some())
        })
        .collect()
}

/// Fraction of ground truths recalled when keeping the globally
/// highest-scoring detections so that the mean count per image is `k`
/// (total budget `round(k · images)`). Score ties are broken by image index,
/// then by position within the image's list.
pub fn eval_recall(dets: &[Vec<Detection>], gts: &[Vec<BBox>], iou_thresh: f64, k: f64) -> Result<f64> {
    let total = check_inputs(dets, gts, iou_thresh)?;
    ensure_arg!(k >= 0.0 && k.is_finite(), "proposal budget must be >= 0");
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (img, list) in dets.iter().enumerate() {
        for (j, d) in list.iter().enumerate() {
            all.push((d.score, img, j));
        }
    }
    all.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let budget = (k * dets.len() as f64).round() as usize;
    let mut kept: Vec<Vec<Detection>> = vec![Vec::new(); dets.len()];
    for &(_, img, j) in all.iter().take(budget) {
        kept[img].push(dets[img][j]);
    }
    let matched: usize = kept
        .iter()
        .zip(gts)
        .map(|(d, g)| match_image(d, g, iou_thresh).iter().filter(|m| m.1).count())
        .sum();
    Ok(matched as f64 / total as f64)
}

/// One operating point of a discrete ROC sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    /// Detections scoring at least this value are kept.
    pub threshold: f64,
    pub false_positives: usize,
    pub true_positive_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalResult {
    pub recall_at_k: BTreeMap<u64, f64>,
    /// Points in order of decreasing threshold.
    pub roc: Vec<RocPoint>,
    pub detections: Vec<Vec<Detection>>,
    pub total_gt: usize,
}

impl EvalResult {
    /// Best true-positive rate with at most `fp` false positives.
    pub fn tpr_at_fp(&self, fp: usize) -> f64 {
        self.roc
            .iter()
            .filter(|p| p.false_positives <= fp)
            .map(|p| p.true_positive_rate)
            .fold(0.0, f64::max)
    }

    /// Fewest false positives reaching a true-positive rate of `tpr`.
    pub fn fp_at_tpr(&self, tpr: f64) -> Option<usize> {
        self.roc
            .iter()
            .filter(|p| p.true_positive_rate >= tpr)
            .map(|p| p.false_positives)
            .min()
    }
}

/// Sweeps the score threshold over every distinct detection score. Matching
/// is greedy and one-to-one per image in score order, so a duplicate of an
/// already matched face counts as a false positive.
pub fn eval_discrete_roc(dets: &[Vec<Detection>], gts: &[Vec<BBox>], iou_thresh: f64) -> Result<EvalResult> {
    let total = check_inputs(dets, gts, iou_thresh)?;
    let mut marks: Vec<(f64, bool)> = dets
        .iter()
        .zip(gts)
        .flat_map(|(d, g)| match_image(d, g, iou_thresh))
        .collect();
    marks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut roc = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(score, hit)) in marks.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_score = marks.get(i + 1).map_or(true, |n| n.0 != score);
        if last_of_score {
            roc.push(RocPoint {
                threshold: score,
                false_positives: fp,
                true_positive_rate: tp as f64 / total as f64,
            });
        }
    }
    Ok(EvalResult {
        recall_at_k: BTreeMap::new(),
        roc,
        detections: dets.to_vec(),
        total_gt: total,
    })
}

/// ROC plus recall at each budget in `ks`.
pub fn evaluate(dets: &[Vec<Detection>], gts: &[Vec<BBox>], iou_thresh: f64, ks: &[u64]) -> Result<EvalResult> {
    let mut r = eval_discrete_roc(dets, gts, iou_thresh)?;
    for &k in ks {
        r.recall_at_k.insert(k, eval_recall(dets, gts, iou_thresh, k as f64)?);
    }
    Ok(r)
}
