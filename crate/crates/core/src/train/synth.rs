use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::derive_seed;
use super::mining::AnnotatedImage;
use crate::error::{ensure_arg, Result};
use crate::geometry::BBox;
use crate::pyramid::{normalize, Image};

/// Synthetic corpus parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub n_images: usize,
    /// Inclusive image side ranges.
    pub width: (usize, usize),
    pub height: (usize, usize),
    /// Face diameters are log-uniform in this range.
    pub face_size: (f64, f64),
    pub max_faces: usize,
    /// 0 gives flat backgrounds; 1 gives dense texture and many distractors.
    pub clutter: f64,
    /// Face-to-background intensity difference range (raw 8-bit levels).
    pub contrast: (f64, f64),
    /// Amplitude of uniform pixel noise (raw 8-bit levels).
    pub noise: f64,
    /// Probability that an image gets clutter drawn over its faces.
    pub occlusion: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_images: 500,
            width: (112, 160),
            height: (112, 160),
            face_size: (12.0, 48.0),
            max_faces: 4,
            clutter: 0.6,
            contrast: (12.0, 80.0),
            noise: 12.0,
            occlusion: 0.3,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.face_size;
        ensure_arg!(
            8.0 <= lo && lo <= hi && hi <= 128.0,
            "face size range must lie within [8, 128]"
        );
        ensure_arg!(
            self.width.0 <= self.width.1 && self.height.0 <= self.height.1,
            "image size ranges are inverted"
        );
        ensure_arg!(
            (self.width.0.min(self.height.0) as f64) >= hi,
            "images must be at least as large as the largest face"
        );
        ensure_arg!(self.max_faces >= 1, "max_faces must be positive");
        ensure_arg!((0.0..=1.0).contains(&self.clutter), "clutter must be in [0,1]");
        ensure_arg!(self.noise >= 0.0, "noise must be non-negative");
        ensure_arg!((0.0..=1.0).contains(&self.occlusion), "occlusion must be in [0,1]");
        ensure_arg!(
            0.0 < self.contrast.0 && self.contrast.0 <= self.contrast.1,
            "invalid contrast range"
        );
        Ok(())
    }
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<f32>,
}

impl Canvas {
    fn blend(&mut self, x: usize, y: usize, value: f32, alpha: f32) {
        let p = &mut self.px[y * self.w + x];
        *p += (value - *p) * alpha;
    }

    /// Rasterizes a shape given by a signed "inside distance" function in
    /// pixels (positive inside) over a bounding square.
    fn shape(&mut self, cx: f64, cy: f64, reach: f64, value: f64, inside: impl Fn(f64, f64) -> f64) {
        let x0 = (cx - reach - 1.0).floor().max(0.0) as usize;
        let y0 = (cy - reach - 1.0).floor().max(0.0) as usize;
        let x1 = ((cx + reach + 1.0).ceil() as usize).min(self.w);
        let y1 = ((cy + reach + 1.0).ceil() as usize).min(self.h);
        for y in y0..y1 {
            for x in x0..x1 {
                let d = inside(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let a = (d + 0.5).clamp(0.0, 1.0);
                if a > 0.0 {
                    self.blend(x, y, value as f32, a as f32);
                }
            }
        }
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64, value: f64) {
        self.shape(cx, cy, r, value, |u, v| r - (u * u + v * v).sqrt());
    }

    fn ring(&mut self, cx: f64, cy: f64, r: f64, thickness: f64, value: f64) {
        self.shape(cx, cy, r, value, |u, v| {
            let d = (u * u + v * v).sqrt();
            (r - d).min(d - (r - thickness))
        });
    }

    /// Rectangle of half extents `(hw, hh)` rotated by `theta`.
    fn rect(&mut self, cx: f64, cy: f64, hw: f64, hh: f64, theta: f64, value: f64) {
        let (s, c) = theta.sin_cos();
        self.shape(cx, cy, hw.hypot(hh), value, |u, v| {
            let (a, b) = (c * u + s * v, -s * u + c * v);
            (hw - a.abs()).min(hh - b.abs())
        });
    }
}

fn rotate(x: f64, y: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Features of a face-like disc: which of eyes and mouth to draw.
struct Features {
    eyes: bool,
    mouth: bool,
}

fn draw_disc_pattern(
    cv: &mut Canvas,
    cx: f64,
    cy: f64,
    size: f64,
    theta: f64,
    face: f64,
    feature: f64,
    f: Features,
) {
    cv.disc(cx, cy, size / 2.0, face);
    if f.eyes {
        for sx in [-1.0, 1.0] {
            let (dx, dy) = rotate(sx * 0.2 * size, -0.1 * size, theta);
            cv.disc(cx + dx, cy + dy, (0.085 * size).max(0.7), feature);
        }
    }
    if f.mouth {
        let (dx, dy) = rotate(0.0, 0.2 * size, theta);
        cv.rect(
            cx + dx,
            cy + dy,
            0.2 * size,
            (0.045 * size).max(0.5),
            theta,
            feature,
        );
    }
}

fn draw_clutter(cv: &mut Canvas, rng: &mut ChaCha8Rng) {
    let level = |rng: &mut ChaCha8Rng| rng.gen_range(20.0..235.0);
    let cx = rng.gen_range(0.0..cv.w as f64);
    let cy = rng.gen_range(0.0..cv.h as f64);
    let size = rng.gen_range(10.0..60.0f64);
    let theta = rng.gen_range(-0.6..0.6);
    match rng.gen_range(0..6) {
        0 => cv.disc(cx, cy, size / 2.0, level(rng)),
        1 | 2 => {
            let face = level(rng);
            let feature = level(rng);
            let f = if rng.gen_bool(0.5) {
                Features { eyes: true, mouth: false }
            } else {
                Features { eyes: false, mouth: true }
            };
            draw_disc_pattern(cv, cx, cy, size, theta, face, feature, f);
        }
        3 => cv.ring(cx, cy, size / 2.0, rng.gen_range(1.0..4.0), level(rng)),
        4 => cv.rect(cx, cy, size / 2.0, size / rng.gen_range(2.0..5.0), theta, level(rng)),
        _ => cv.rect(cx, cy, size, rng.gen_range(0.5..1.5), theta * 4.0, level(rng)),
    }
}

fn render(p: &SynthParams, rng: &mut ChaCha8Rng) -> AnnotatedImage {
    let w = rng.gen_range(p.width.0..=p.width.1);
    let h = rng.gen_range(p.height.0..=p.height.1);
    let base = rng.gen_range(70.0..185.0);
    let (gx, gy) = (rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25));
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let f = rng.gen_range(0.02..0.15) * std::f64::consts::TAU;
            let dir: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let amp = rng.gen_range(0.0..15.0) * p.clutter;
            (f * dir.cos(), f * dir.sin(), amp, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let mut px = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let mut v = base + gx * (xf - w as f64 / 2.0) + gy * (yf - h as f64 / 2.0);
            for &(fx, fy, amp, ph) in &waves {
                v += amp * (fx * xf + fy * yf + ph).sin();
            }
            px[y * w + x] = v as f32;
        }
    }
    let mut cv = Canvas { w, h, px };

    let n_clutter = (p.clutter * rng.gen_range(3.0..10.0)).round() as usize;
    for _ in 0..n_clutter {
        draw_clutter(&mut cv, rng);
    }

    let n_faces = rng.gen_range(1..=p.max_faces);
    let (lo, hi) = (p.face_size.0.ln(), p.face_size.1.ln());
    // Sizes are drawn before placement and placed largest first, so failed
    // placements do not skew the size distribution towards small faces.
    let mut sizes: Vec<f64> = (0..n_faces).map(|_| rng.gen_range(lo..=hi).exp()).collect();
    sizes.sort_by(|a, b| b.total_cmp(a));
    let mut boxes: Vec<BBox> = Vec::new();
    for s in sizes {
        for _ in 0..100 {
            let x1 = rng.gen_range(0.0..=(w as f64 - s));
            let y1 = rng.gen_range(0.0..=(h as f64 - s));
            let b = BBox::new(x1, y1, x1 + s, y1 + s);
            let grown = b.expand(0.1, 0.1);
            if boxes.iter().any(|o| o.intersection(&grown) > 0.0) {
                continue;
            }
            let (cx, cy) = b.center();
            let bg = cv.px[(cy as usize).min(h - 1) * w + (cx as usize).min(w - 1)] as f64;
            let c = rng.gen_range(p.contrast.0..=p.contrast.1);
            let sign = if bg + c > 245.0 || (bg - c >= 10.0 && rng.gen_bool(0.5)) {
                -1.0
            } else {
                1.0
            };
            let face = (bg + sign * c).clamp(0.0, 255.0);
            let feature = (face - sign * c * rng.gen_range(0.8..1.3)).clamp(0.0, 255.0);
            let theta = rng.gen_range(-15.0f64..=15.0).to_radians();
            draw_disc_pattern(
                &mut cv,
                cx,
                cy,
                s,
                theta,
                face,
                feature,
                Features { eyes: true, mouth: true },
            );
            boxes.push(b);
            break;
        }
    }

    if rng.gen_bool(p.occlusion) {
        for _ in 0..rng.gen_range(1..=2) {
            draw_clutter(&mut cv, rng);
        }
    }

    let noise = p.noise;
    let raw: Vec<f32> = cv
        .px
        .iter()
        .map(|&v| {
            let n = if noise > 0.0 { rng.gen_range(-noise..noise) as f32 } else { 0.0 };
            normalize((v + n).round().clamp(0.0, 255.0) as u8)
        })
        .collect();
    let image = Image::new(w, h, 1, raw).expect("rendered buffer matches its dimensions");
    AnnotatedImage::new(image, boxes)
}

/// Grayscale images with face-like discs (two eyes and a mouth, rotated up
/// to 15 degrees) over textured clutter, including eye-only and mouth-only
/// discs as distractors. Image `i` depends only on `seed` and `i`.
pub fn synth_corpus(seed: u64, params: &SynthParams) -> Result<Vec<AnnotatedImage>> {
    params.validate()?;
    Ok((0..params.n_images)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            render(params, &mut rng)
        })
        .collect())
}
