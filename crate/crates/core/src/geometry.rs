//! Anchors, context templates, boxes, NMS, box regression and the analytic
//! pyramid cost model.
//!
//! Anchor and template indices are 1-based throughout (`k = 1` is the
//! largest anchor, equal to the detection window). Boxes use the
//! corner-exclusive convention: width is `x2 - x1` with no `+1`.

use std::cmp::Ordering;

use crate::error::{ensure_arg, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnchorConfig {
    /// Detection window side `S_W` in pixels.
    pub window: f64,
    /// Scale step between consecutive anchors.
    pub alpha: f64,
    pub anchors: usize,
    /// Scale step between context templates; kept equal to `alpha` so that
    /// templates coincide with anchors.
    pub context_alpha: f64,
    /// Context templates evaluated per face scale (`n_C`).
    pub templates: usize,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            window: 24.0,
            alpha: 0.7937,
            anchors: 4,
            context_alpha: 0.7937,
            templates: 1,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_arg!(self.window > 0.0, "window must be positive");
        ensure_arg!(
            self.alpha > 0.0 && self.alpha < 1.0,
            "anchor scale factor must be in (0,1), got {}",
            self.alpha
        );
        ensure_arg!(
            self.context_alpha > 0.0 && self.context_alpha <= 1.0,
            "context scale factor must be in (0,1]"
        );
        ensure_arg!(self.anchors >= 1, "need at least one anchor");
        ensure_arg!(
            self.templates >= 1 && self.templates <= self.anchors,
            "templates ({}) must be in 1..={}",
            self.templates,
            self.anchors
        );
        Ok(())
    }

    /// Same geometry for a stage with a different window size.
    pub fn with_window(&self, window: f64) -> Self {
        Self { window, ..*self }
    }

    /// Ratio `window / S_A(k)` by which a face box is expanded to form the
    /// k-th template's window.
    pub fn window_ratio(&self, k: usize) -> Result<f64> {
        Ok(self.window / anchor_size(self, k)?)
    }
}

/// `S_A(k) = S_W · α_A^(k-1)`.
pub fn anchor_size(cfg: &AnchorConfig, k: usize) -> Result<f64> {
    ensure_arg!(
        (1..=cfg.anchors).contains(&k),
        "anchor index {k} outside 1..={}",
        cfg.anchors
    );
    Ok(cfg.window * cfg.alpha.powi(k as i32 - 1))
}

/// Padding between the window edge and the face region of template `i`:
/// `S_W · (1 - α_C^(i-1)) / 2`.
pub fn context_padding(cfg: &AnchorConfig, i: usize) -> Result<f64> {
    ensure_arg!(
        (1..=cfg.anchors).contains(&i),
        "template index {i} outside 1..={}",
        cfg.anchors
    );
    Ok(cfg.window * (1.0 - cfg.context_alpha.powi(i as i32 - 1)) / 2.0)
}

fn check_cost_args(alpha_a: f64, n_a: usize) -> Result<f64> {
    ensure_arg!(
        alpha_a > 0.0 && alpha_a < 1.0,
        "anchor scale factor must be in (0,1), got {alpha_a}"
    );
    ensure_arg!(n_a >= 1, "need at least one anchor");
    Ok(alpha_a * alpha_a)
}

/// Fraction of a dense pyramid's cost spent by a coarse pyramid with `n_a`
/// anchors, using the denominator `1 - α^(n_a+1)` with `α = α_A²`.
///
/// For `α_A = 0.7937, n_a = 4` this gives 0.1027 (≈ 1/9.74). The exact
/// closed form of `α^n / Σ_{k=1..n} α^k` is [`cost_ratio_geometric`]; the two
/// differ only in that exponent.
pub fn cost_ratio(alpha_a: f64, n_a: usize) -> Result<f64> {
    let a = check_cost_args(alpha_a, n_a)?;
    Ok(a.powi(n_a as i32 - 1) * (1.0 - a) / (1.0 - a.powi(n_a as i32 + 1)))
}

/// `α^(n_a-1)(1-α) / (1-α^n_a)`, the closed form of `α^n / Σ_{k=1..n} α^k`.
/// For `α_A = 0.7937, n_a = 4` this gives 0.1098 (≈ 1/9.11).
pub fn cost_ratio_geometric(alpha_a: f64, n_a: usize) -> Result<f64> {
    let a = check_cost_args(alpha_a, n_a)?;
    Ok(a.powi(n_a as i32 - 1) * (1.0 - a) / (1.0 - a.powi(n_a as i32)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }
    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        self.x2 > self.x1
            && self.y2 > self.y1
            && [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Self {
        Self::new(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    /// Grows every side by `fx·width` horizontally and `fy·height`
    /// vertically.
    pub fn expand(&self, fx: f64, fy: f64) -> Self {
        let (dx, dy) = (self.width() * fx, self.height() * fy);
        Self::new(self.x1 - dx, self.y1 - dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn clamp(&self, width: f64, height: f64) -> Self {
        Self::new(
            self.x1.clamp(0.0, width),
            self.y1.clamp(0.0, height),
            self.x2.clamp(0.0, width),
            self.y2.clamp(0.0, height),
        )
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Intersection over union; 0 for disjoint or degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

/// Corner offsets of a ground-truth box relative to a reference box,
/// normalized by the reference width and height.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RegressionDelta(pub [f64; 4]);

impl RegressionDelta {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

pub fn encode_regression(anchor: &BBox, gt: &BBox) -> Result<RegressionDelta> {
    let (w, h) = (anchor.width(), anchor.height());
    ensure_arg!(w > 0.0 && h > 0.0, "degenerate reference box {anchor:?}");
    Ok(RegressionDelta([
        (gt.x1 - anchor.x1) / w,
        (gt.y1 - anchor.y1) / h,
        (gt.x2 - anchor.x2) / w,
        (gt.y2 - anchor.y2) / h,
    ]))
}

pub fn decode_regression(anchor: &BBox, d: &RegressionDelta) -> Result<BBox> {
    let (w, h) = (anchor.width(), anchor.height());
    ensure_arg!(w > 0.0 && h > 0.0, "degenerate reference box {anchor:?}");
    ensure_arg!(d.is_finite(), "non-finite regression delta");
    let [dx1, dy1, dx2, dy2] = d.0;
    Ok(BBox::new(
        anchor.x1 + dx1 * w,
        anchor.y1 + dy1 * h,
        anchor.x2 + dx2 * w,
        anchor.y2 + dy2 * h,
    ))
}

/// A detection in original-image coordinates with its provenance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub bbox: BBox,
    /// Face-class softmax probability from the stage that last scored it.
    pub score: f64,
    /// Anchor that produced the box (1-based).
    pub anchor: usize,
    /// Winning context template (1-based); equals `anchor` until merged.
    pub template: usize,
    /// Index of the pyramid slice the box was decoded from.
    pub slice: usize,
}

impl ScoredCandidate {
    pub fn new(bbox: BBox, score: f64) -> Self {
        Self {
            bbox,
            score,
            anchor: 1,
            template: 1,
            slice: 0,
        }
    }
}

/// Descending score, then smaller area, then original order.
fn nms_order(cands: &[ScoredCandidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&cands[a], &cands[b]);
        cb.score
            .partial_cmp(&ca.score)
            .unwrap_or(Ordering::Equal)
            .then(
                ca.bbox
                    .area()
                    .partial_cmp(&cb.bbox.area())
                    .unwrap_or(Ordering::Equal),
            )
            .then(a.cmp(&b))
    });
    order
}

/// Greedy non-maximum suppression. Candidates overlapping a kept one with
/// IoU strictly above `threshold` are dropped. Output is in keep order.
pub fn nms(candidates: &[ScoredCandidate], threshold: f64) -> Vec<ScoredCandidate> {
    let order = nms_order(candidates);
    let mut suppressed = vec![false; candidates.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(candidates[i]);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&candidates[i].bbox, &candidates[j].bbox) > threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

/// Like [`nms`], but also returns for every kept candidate the indices of
/// the inputs it absorbed (itself included).
pub fn nms_groups(candidates: &[ScoredCandidate], threshold: f64) -> Vec<(usize, Vec<usize>)> {
    let order = nms_order(candidates);
    let mut suppressed = vec![false; candidates.len()];
    let mut groups = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        let mut members = vec![i];
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&candidates[i].bbox, &candidates[j].bbox) > threshold {
                suppressed[j] = true;
                members.push(j);
            }
        }
        groups.push((i, members));
    }
    groups
}
