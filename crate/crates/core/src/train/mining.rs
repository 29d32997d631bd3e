use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::derive_seed;
use crate::cascade::{detect, template_window, CascadeConfig, DetectorModel};
use crate::error::{ensure_arg, Result};
use crate::geometry::{anchor_size, encode_regression, iou, AnchorConfig, BBox};
use crate::nn::SampleKind;
use crate::pyramid::{crop_resize, Image};

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedImage {
    pub image: Image,
    pub boxes: Vec<BBox>,
}

impl AnnotatedImage {
    /// Clamps boxes to the image and drops degenerate ones.
    pub fn new(image: Image, boxes: Vec<BBox>) -> Self {
        let (w, h) = (image.width as f64, image.height as f64);
        let boxes = boxes
            .into_iter()
            .map(|b| b.clamp(w, h))
            .filter(BBox::is_valid)
            .collect();
        Self { image, boxes }
    }

    pub fn max_iou(&self, b: &BBox) -> (f64, Option<usize>) {
        let mut best = (0.0, None);
        for (i, g) in self.boxes.iter().enumerate() {
            let v = iou(b, g);
            if v > best.0 {
                best = (v, Some(i));
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSpec {
    pub pos_iou: f64,
    pub neg_iou: f64,
    pub semi_iou: f64,
    /// Negatives per positive.
    pub neg_per_pos: f64,
    /// Semi-positives per positive.
    pub semi_per_pos: f64,
    /// Positives requested per annotated face.
    pub positives_per_face: usize,
    /// Attempts per requested sample before giving up.
    pub max_attempts: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            pos_iou: 0.65,
            neg_iou: 0.3,
            semi_iou: 0.4,
            neg_per_pos: 3.0,
            semi_per_pos: 1.0,
            positives_per_face: 8,
            max_attempts: 40,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_arg!(
            0.0 <= self.neg_iou && self.neg_iou < self.semi_iou && self.semi_iou < self.pos_iou
                && self.pos_iou <= 1.0,
            "need 0 <= neg_iou < semi_iou < pos_iou <= 1"
        );
        ensure_arg!(
            self.neg_per_pos >= 0.0 && self.semi_per_pos >= 0.0,
            "sample ratios must be non-negative"
        );
        ensure_arg!(self.max_attempts >= 1, "max_attempts must be positive");
        Ok(())
    }

    /// Kind for a given IoU; `None` inside the ignored band.
    pub fn classify(&self, v: f64) -> Option<SampleKind> {
        if v > self.pos_iou {
            Some(SampleKind::Positive)
        } else if v > self.semi_iou {
            Some(SampleKind::SemiPositive)
        } else if v < self.neg_iou {
            Some(SampleKind::Negative)
        } else {
            None
        }
    }
}

/// A training patch and its supervision.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Planar `(channels, size, size)` pixels.
    pub patch: Vec<f32>,
    pub kind: SampleKind,
    /// Anchor (1-based) whose heads this sample trains.
    pub anchor: usize,
    pub delta: [f32; 4],
    /// Cropped window in image coordinates.
    pub window: BBox,
    /// IoU of the anchor box against the best-matching ground truth.
    pub iou: f64,
}

/// Log-nearest anchor for a face of `face_size` window pixels; ties go to
/// the smaller index.
pub fn assign_anchor(face_size: f64, cfg: &AnchorConfig) -> usize {
    let l = face_size.max(f64::MIN_POSITIVE).ln();
    let mut best = (f64::INFINITY, 1);
    for k in 1..=cfg.anchors {
        let d = (l - anchor_size(cfg, k).expect("k in range").ln()).abs();
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

/// Centred anchor box of anchor `k` inside a square window.
fn anchor_box(window: &BBox, k: usize, cfg: &AnchorConfig) -> BBox {
    let frac = cfg.alpha.powi(k as i32 - 1);
    let (cx, cy) = window.center();
    BBox::from_center(cx, cy, window.width() * frac, window.height() * frac)
}

fn side(b: &BBox) -> f64 {
    (b.width() * b.height()).sqrt()
}

struct Miner<'a> {
    ann: &'a AnnotatedImage,
    spec: &'a SampleSpec,
    cfg: &'a AnchorConfig,
    size: usize,
}

impl Miner<'_> {
    /// Labels a window trained through anchor `k`.
    fn label(&self, window: BBox, k: usize) -> Option<Sample> {
        let a = anchor_box(&window, k, self.cfg);
        let (v, gi) = self.ann.max_iou(&a);
        let kind = self.spec.classify(v)?;
        let delta = match (kind, gi) {
            (SampleKind::Negative, _) | (_, None) => [0.0; 4],
            (_, Some(g)) => encode_regression(&a, &self.ann.boxes[g])
                .ok()?
                .0
                .map(|d| d as f32),
        };
        Some(Sample {
            patch: crop_resize(&self.ann.image, &window, self.size),
            kind,
            anchor: k,
            delta,
            window,
            iou: v,
        })
    }

    /// A window around face `g` whose anchor is chosen by
    /// [`assign_anchor`]; `jitter` scales the shift and size noise.
    fn around_face(&self, g: &BBox, jitter: f64, rng: &mut ChaCha8Rng) -> Option<Sample> {
        let s = side(g);
        let k_target = rng.gen_range(1..=self.cfg.anchors);
        let face = s * (rng.gen_range(-1.0..1.0) * jitter).exp();
        let win = face / self.cfg.alpha.powi(k_target as i32 - 1);
        let (cx, cy) = g.center();
        let dx = rng.gen_range(-1.0..1.0) * jitter * s;
        let dy = rng.gen_range(-1.0..1.0) * jitter * s;
        let window = BBox::from_center(cx + dx, cy + dy, win, win);
        let k = assign_anchor(s * self.cfg.window / win, self.cfg);
        self.label(window, k)
    }

    /// Window anywhere in the image with a log-uniform face-region size.
    fn random_window(&self, k: usize, rng: &mut ChaCha8Rng) -> BBox {
        let img = &self.ann.image;
        let max_side = img.width.min(img.height) as f64;
        let lo = (self.cfg.window * self.cfg.alpha.powi(self.cfg.anchors as i32 - 1)).min(max_side);
        let face = (rng.gen_range(lo.ln()..=max_side.ln())).exp();
        let win = face / self.cfg.alpha.powi(k as i32 - 1);
        let cx = rng.gen_range(0.0..img.width as f64);
        let cy = rng.gen_range(0.0..img.height as f64);
        BBox::from_center(cx, cy, win, win)
    }

    fn negative(&self, rng: &mut ChaCha8Rng) -> Option<Sample> {
        let k = rng.gen_range(1..=self.cfg.anchors);
        let window = if !self.ann.boxes.is_empty() && rng.gen_bool(0.5) {
            let g = self.ann.boxes[rng.gen_range(0..self.ann.boxes.len())];
            let s = side(&g);
            let scale = rng.gen_range(0.5f64.ln()..2.0f64.ln()).exp();
            let (cx, cy) = g.center();
            let win = s * scale / self.cfg.alpha.powi(k as i32 - 1);
            BBox::from_center(
                cx + rng.gen_range(-1.0..1.0) * s,
                cy + rng.gen_range(-1.0..1.0) * s,
                win,
                win,
            )
        } else {
            self.random_window(k, rng)
        };
        self.label(window, k)
            .filter(|s| s.kind == SampleKind::Negative)
    }
}

/// Random crops of one image labelled by the IoU of their anchor box with
/// the best ground truth. Positives and semi-positives are drawn around
/// faces (anchor by [`assign_anchor`]); negatives get a random anchor.
/// Shortfalls against the requested counts are logged.
pub fn mine_samples(
    ann: &AnnotatedImage,
    spec: &SampleSpec,
    cfg: &AnchorConfig,
    patch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Sample>> {
    spec.validate()?;
    cfg.validate()?;
    ensure_arg!(patch_size >= 1, "patch size must be positive");
    let img = &ann.image;
    ensure_arg!(
        img.width as f64 >= cfg.window && img.height as f64 >= cfg.window,
        "image {}x{} is smaller than the window",
        img.width,
        img.height
    );
    let miner = Miner {
        ann,
        spec,
        cfg,
        size: patch_size,
    };
    let want_pos = ann.boxes.len() * spec.positives_per_face;
    let mut pos = Vec::new();
    let mut semi = Vec::new();
    let want_semi = (want_pos as f64 * spec.semi_per_pos).round() as usize;
    if !ann.boxes.is_empty() {
        let budget = (want_pos + want_semi) * spec.max_attempts;
        for attempt in 0..budget {
            if pos.len() >= want_pos && semi.len() >= want_semi {
                break;
            }
            let g = ann.boxes[attempt % ann.boxes.len()];
            let need_pos = pos.len() < want_pos;
            let jitter = if need_pos && (semi.len() >= want_semi || attempt % 2 == 0) {
                0.12
            } else {
                0.3
            };
            if let Some(s) = miner.around_face(&g, jitter, rng) {
                match s.kind {
                    SampleKind::Positive if pos.len() < want_pos => pos.push(s),
                    SampleKind::SemiPositive if semi.len() < want_semi => semi.push(s),
                    _ => {}
                }
            }
        }
        if pos.len() < want_pos || semi.len() < want_semi {
            log::warn!(
                "mined {}/{want_pos} positives and {}/{want_semi} semi-positives",
                pos.len(),
                semi.len()
            );
        }
    }
    let basis = if ann.boxes.is_empty() {
        spec.positives_per_face
    } else {
        pos.len()
    };
    let want_neg = (basis as f64 * spec.neg_per_pos).round() as usize;
    let mut neg = Vec::new();
    for _ in 0..want_neg * spec.max_attempts {
        if neg.len() >= want_neg {
            break;
        }
        if let Some(s) = miner.negative(rng) {
            neg.push(s);
        }
    }
    if neg.len() < want_neg {
        log::warn!("mined {}/{want_neg} negatives", neg.len());
    }
    pos.extend(semi);
    pos.extend(neg);
    Ok(pos)
}

/// [`mine_samples`] over a set, each image with its own derived seed.
pub fn mine_corpus(
    set: &[AnnotatedImage],
    spec: &SampleSpec,
    cfg: &AnchorConfig,
    patch_size: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut all = Vec::new();
    for (i, ann) in set.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        all.extend(mine_samples(ann, spec, cfg, patch_size, &mut rng)?);
    }
    Ok(all)
}

/// Runs the partial cascade over `set` and returns up to `count` of its
/// false positives (IoU below `neg_iou` against every ground truth),
/// highest score first, cropped through each candidate's winning template.
pub fn hard_negative_mine(
    det: &DetectorModel,
    cfg: &CascadeConfig,
    set: &[AnnotatedImage],
    spec: &SampleSpec,
    count: usize,
    patch_size: usize,
) -> Result<Vec<Sample>> {
    let mut pool = Vec::new();
    for (i, ann) in set.iter().enumerate() {
        for (j, c) in detect(&ann.image, det, cfg)?.into_iter().enumerate() {
            let (v, _) = ann.max_iou(&c.bbox);
            if v < spec.neg_iou {
                pool.push((c.score, i, j, c));
            }
        }
    }
    pool.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    if pool.len() < count {
        log::warn!("hard-negative mining found {} of {count} requested", pool.len());
    }
    let mut out = Vec::with_capacity(count.min(pool.len()));
    for (_, i, _, c) in pool.into_iter().take(count) {
        let ann = &set[i];
        let window = template_window(&c.bbox, c.template, &cfg.anchor)?;
        out.push(Sample {
            patch: crop_resize(&ann.image.with_channels(det.input_channels())?, &window, patch_size),
            kind: SampleKind::Negative,
            anchor: c.template,
            delta: [0.0; 4],
            window,
            iou: ann.max_iou(&c.bbox).0,
        });
    }
    Ok(out)
}
