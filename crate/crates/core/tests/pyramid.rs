mod common;

use anchor_cascade::geometry::{anchor_size, AnchorConfig, BBox};
use anchor_cascade::pyramid::{
    build_schedule, map_to_original, map_to_slice, resize_bilinear, Image,
};
use proptest::prelude::*;

fn scaled(dim: usize, s: f64) -> usize {
    ((dim as f64 * s + 0.5).floor() as usize).max(1)
}

/// Scales of a dense pyramid (step α) over the same face range, computed
/// directly from the stopping rule.
fn dense_scales(w: usize, h: usize, cfg: &AnchorConfig, min_face: f64, max_face: f64) -> Vec<f64> {
    let smallest = cfg.window * cfg.alpha.powi(cfg.anchors as i32 - 1);
    let mut out = Vec::new();
    let mut s = smallest / min_face;
    while scaled(w.min(h), s) as f64 >= cfg.window && smallest * cfg.alpha.sqrt() / s <= max_face {
        out.push(s);
        s *= cfg.alpha;
    }
    out
}

#[test]
fn every_reachable_face_size_is_covered() {
    let cfg = AnchorConfig::default();
    let root = cfg.alpha.sqrt();
    for (w, h) in [(640, 480), (200, 150), (97, 301), (1024, 768)] {
        for min_face in [8.0, 12.0, 16.0, 20.0, 33.0] {
            let max_face = (w.min(h)) as f64;
            let sched = build_schedule(w, h, &cfg, min_face, max_face).unwrap();
            if sched.is_empty() {
                continue;
            }
            let last = *sched.scales.last().unwrap();
            let reach = (cfg.window / root / last).min(max_face);
            let steps = 2000;
            for i in 0..=steps {
                let face = min_face * (reach / min_face).powf(i as f64 / steps as f64);
                let covered = sched.scales.iter().any(|&s| {
                    (1..=cfg.anchors).any(|k| {
                        let a = anchor_size(&cfg, k).unwrap();
                        let f = face * s;
                        f >= a * root - 1e-9 && f <= a / root + 1e-9
                    })
                });
                assert!(covered, "{w}x{h} min {min_face}: face {face} uncovered");
            }
        }
    }
}

#[test]
fn coarse_count_is_a_quarter_of_dense() {
    let cfg = AnchorConfig::default();
    for (w, h) in [(640, 480), (320, 240), (150, 150), (1000, 90)] {
        for min_face in [10.0, 12.0, 16.0, 24.0] {
            let max_face = w.min(h) as f64;
            let coarse = build_schedule(w, h, &cfg, min_face, max_face).unwrap();
            let dense = dense_scales(w, h, &cfg, min_face, max_face);
            let expect = dense.len().div_ceil(cfg.anchors) as i64;
            assert!((coarse.scales.len() as i64 - expect).abs() <= 1, "{w}x{h} {min_face}");
            for (j, s) in coarse.scales.iter().enumerate() {
                assert!((s - dense[j * cfg.anchors]).abs() < 1e-12);
            }
            let all = coarse.context_slices(cfg.anchors);
            assert_eq!(all.len(), dense.len());
        }
    }
}

#[test]
fn coarse_pixels_are_under_an_eighth_of_dense() {
    let cfg = AnchorConfig::default();
    let single = AnchorConfig { anchors: 1, templates: 1, ..cfg };
    for min_face in [12.0, 16.0, 20.0] {
        let coarse = build_schedule(640, 480, &cfg, min_face, 480.0).unwrap();
        let dense = build_schedule(640, 480, &single, min_face, 480.0).unwrap();
        let ratio = coarse.pixel_count() as f64 / dense.pixel_count() as f64;
        assert!(ratio <= 0.125, "min face {min_face}: ratio {ratio}");
    }
}

#[test]
fn consecutive_scales_use_the_coarse_step() {
    let cfg = AnchorConfig::default();
    let sched = build_schedule(640, 480, &cfg, 16.0, 480.0).unwrap();
    assert!((sched.coarse_step - 0.39685).abs() < 1e-4);
    assert!((sched.scales[0] - 0.75).abs() < 1e-4);
    for pair in sched.scales.windows(2) {
        assert!((pair[1] / pair[0] - sched.coarse_step).abs() < 1e-9);
    }
    for s in sched.slices() {
        assert!(s.width.min(s.height) as f64 >= cfg.window);
    }
}

proptest! {
    #[test]
    fn box_mapping_round_trips(s in 0.01f64..4.0, x in -100.0f64..100.0, w in 1.0f64..50.0) {
        let b = BBox::new(x, x / 2.0, x + w, x / 2.0 + w);
        let back = map_to_original(s, &map_to_slice(s, &b));
        prop_assert!((back.x1 - b.x1).abs() < 1e-9 && (back.y2 - b.y2).abs() < 1e-9);
    }

    #[test]
    fn constant_images_stay_constant(v in -1.0f32..1.0, f in 0.05f64..3.0, w in 1usize..40, h in 1usize..40) {
        let img = Image::filled(w, h, 1, v);
        let out = resize_bilinear(&img, f).unwrap();
        prop_assert_eq!(out.width, scaled(w, f));
        prop_assert_eq!(out.height, scaled(h, f));
        prop_assert!(out.data.iter().all(|&p| (p - v).abs() < 1e-6));
    }
}
