//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod grad;

use anchor_cascade::eval::Detection;
use anchor_cascade::geometry::{BBox, ScoredCandidate};
use anchor_cascade::nn::{Model, NetworkSpec, Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// IoU written directly from the corner coordinates.
pub fn iou_oracle(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// IoU of integer boxes by counting covered unit pixels.
pub fn raster_iou(a: &BBox, b: &BBox) -> f64 {
    let x0 = a.x1.min(b.x1) as i64;
    let y0 = a.y1.min(b.y1) as i64;
    let x1 = a.x2.max(b.x2) as i64;
    let y1 = a.y2.max(b.y2) as i64;
    let inside = |r: &BBox, x: i64, y: i64| {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        cx > r.x1 && cx < r.x2 && cy > r.y1 && cy < r.y2
    };
    let (mut inter, mut union) = (0u64, 0u64);
    for y in y0..y1 {
        for x in x0..x1 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += u64::from(ia && ib);
            union += u64::from(ia || ib);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Quadratic NMS: repeatedly take the best remaining box (score, then
/// smaller area, then input order) and delete everything it overlaps.
pub fn brute_force_nms(cands: &[ScoredCandidate], threshold: f64) -> Vec<ScoredCandidate> {
    let mut alive: Vec<usize> = (0..cands.len()).collect();
    let mut out = Vec::new();
    while !alive.is_empty() {
        let mut best = alive[0];
        for &i in &alive[1..] {
            let (c, b) = (&cands[i], &cands[best]);
            let better = c.score > b.score
                || (c.score == b.score && c.bbox.area() < b.bbox.area())
                || (c.score == b.score && c.bbox.area() == b.bbox.area() && i < best);
            if better {
                best = i;
            }
        }
        out.push(cands[best]);
        alive.retain(|&i| i != best && iou_oracle(&cands[i].bbox, &cands[best].bbox) <= threshold);
    }
    out
}

pub fn random_box(rng: &mut ChaCha8Rng, extent: f64) -> BBox {
    let x = rng.gen_range(0.0..extent);
    let y = rng.gen_range(0.0..extent);
    let w = rng.gen_range(1.0..extent / 2.0);
    let h = rng.gen_range(1.0..extent / 2.0);
    BBox::new(x, y, x + w, y + h)
}

pub fn random_int_box(rng: &mut ChaCha8Rng, extent: i64) -> BBox {
    let x = rng.gen_range(0..extent);
    let y = rng.gen_range(0..extent);
    let w = rng.gen_range(1..=extent / 2);
    let h = rng.gen_range(1..=extent / 2);
    BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64)
}

/// Greedy one-to-one matching recomputed from scratch for every distinct
/// threshold: `(threshold, false positives, true-positive rate)`, thresholds
/// descending.
pub fn roc_oracle(dets: &[Vec<Detection>], gts: &[Vec<BBox>], iou_thresh: f64) -> Vec<(f64, usize, f64)> {
    let total: usize = gts.iter().map(Vec::len).sum();
    let mut scores: Vec<f64> = dets.iter().flatten().map(|d| d.score).collect();
    scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
    scores.dedup();
    scores
        .into_iter()
        .map(|t| {
            let (mut tp, mut fp) = (0, 0);
            for (list, g) in dets.iter().zip(gts) {
                let mut kept: Vec<(usize, &Detection)> =
                    list.iter().enumerate().filter(|(_, d)| d.score >= t).collect();
                kept.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap().then(a.0.cmp(&b.0)));
                let mut used = vec![false; g.len()];
                for (_, d) in kept {
                    let pick = (0..g.len())
                        .filter(|&j| !used[j] && iou_oracle(&d.bbox, &g[j]) > iou_thresh)
                        .fold(None, |best: Option<usize>, j| match best {
                            Some(b) if iou_oracle(&d.bbox, &g[b]) >= iou_oracle(&d.bbox, &g[j]) => Some(b),
                            _ => Some(j),
                        });
                    match pick {
                        Some(j) => {
                            used[j] = true;
                            tp += 1;
                        }
                        None => fp += 1,
                    }
                }
            }
            (t, fp, tp as f64 / total as f64)
        })
        .collect()
}

/// A random patch network: 2 to 4 convolutions, each optionally followed
/// by PReLU, sized so the stack reduces its input to exactly 1x1.
/// Zero padding appears only when `padded` is set.
pub fn random_patch_spec(rng: &mut ChaCha8Rng, anchors: usize, padded: bool) -> NetworkSpec {
    loop {
        let channels = rng.gen_range(1..=3);
        let depth = rng.gen_range(2..=4);
        let layers: Vec<(usize, usize, usize, usize, bool)> = (0..depth)
            .map(|_| {
                let kernel = if rng.gen_bool(0.75) { 3 } else { 1 };
                let pad = usize::from(padded && kernel == 3 && rng.gen_bool(0.3));
                (kernel, rng.gen_range(1..=2), pad, rng.gen_range(1..=6), rng.gen_bool(0.7))
            })
            .collect();
        let size = layers
            .iter()
            .rev()
            .fold(1i64, |s, &(k, st, p, _, _)| (s - 1) * st as i64 + k as i64 - 2 * p as i64);
        if !(2..=20).contains(&size) {
            continue;
        }
        let mut text = format!("name random\ninput {size}\nchannels {channels}\nanchors {anchors}\nmode patch\n");
        for (k, st, p, out, act) in layers {
            text.push_str(&format!("conv {out} {k} {st} {p}\n"));
            if act {
                text.push_str("prelu\n");
            }
        }
        text.push_str("head\n");
        if let Ok(spec) = NetworkSpec::parse(&text) {
            return spec;
        }
    }
}

/// Model with every parameter drawn uniformly from `[-scale, scale]`
/// (PReLU slopes from `[0, 0.5]`).
pub fn randomize<T: Scalar>(model: &mut Model<T>, rng: &mut ChaCha8Rng, scale: f64) {
    for p in &mut model.params {
        let is_prelu = matches!(p, anchor_cascade::nn::LayerParams::PRelu { .. });
        for s in p.slices_mut() {
            for v in s.iter_mut() {
                *v = T::from_real(if is_prelu {
                    rng.gen_range(0.0..0.5)
                } else {
                    rng.gen_range(-scale..scale)
                });
            }
        }
    }
}

pub fn random_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::from_real(rng.gen_range(-1.0..1.0))).collect()).unwrap()
}

/// Largest difference between a dense FCN evaluation of a random patch
/// network and the same network applied to every window separately.
pub fn fcn_patch_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let anchors = r.gen_range(1..=4);
    let spec = random_patch_spec(&mut r, anchors, false);
    let mut model = Model::<f32>::init(spec.clone(), seed).unwrap();
    randomize(&mut model, &mut r, 0.7);
    let s = spec.input_size;
    let stride = spec.total_stride();
    let h = s + stride * r.gen_range(0..5) + r.gen_range(0..stride);
    let w = s + stride * r.gen_range(0..5) + r.gen_range(0..stride);
    let ch = spec.input_channels;
    let img: Tensor<f32> = random_tensor(&mut r, [1, ch, h, w]);
    let dense = model.fcn_convert().forward_raw(&img, None).unwrap();
    let (mh, mw) = (dense.h(), dense.w());
    assert_eq!(spec.output_dims(h, w), Some((mh, mw)));
    let mut gap = 0.0f64;
    for v in 0..mh {
        for u in 0..mw {
            let mut patch = Tensor::zeros([1, ch, s, s]);
            for c in 0..ch {
                for y in 0..s {
                    for x in 0..s {
                        patch.set(0, c, y, x, img.at(0, c, v * stride + y, u * stride + x));
                    }
                }
            }
            let out = model.forward_raw(&patch, None).unwrap();
            for c in 0..dense.c() {
                gap = gap.max((out.at(0, c, 0, 0) - dense.at(0, c, v, u)).abs() as f64);
            }
        }
    }
    gap
}
