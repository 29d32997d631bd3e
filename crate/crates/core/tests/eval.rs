mod common;

use anchor_cascade::eval::{eval_discrete_roc, eval_recall, evaluate, Detection};
use anchor_cascade::geometry::BBox;
use common::{random_box, roc_oracle, rng};
use rand::Rng;

type Case = (Vec<Vec<Detection>>, Vec<Vec<BBox>>);

fn random_case(seed: u64) -> Case {
    let mut r = rng(seed);
    let images = r.gen_range(1..6);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..images {
        let g: Vec<BBox> = (0..r.gen_range(1..5)).map(|_| random_box(&mut r, 80.0)).collect();
        let mut d = Vec::new();
        for _ in 0..r.gen_range(0..12) {
            let bbox = if r.gen_bool(0.6) && !g.is_empty() {
                let t = g[r.gen_range(0..g.len())];
                let j = r.gen_range(-2.0..2.0);
                BBox::new(t.x1 + j, t.y1 - j, t.x2 + j, t.y2)
            } else {
                random_box(&mut r, 80.0)
            };
            d.push(Detection { bbox, score: r.gen_range(0..10) as f64 / 10.0 });
        }
        dets.push(d);
        gts.push(g);
    }
    (dets, gts)
}

#[test]
fn roc_matches_independent_sweep() {
    for seed in 0..300 {
        let (dets, gts) = random_case(seed);
        let roc = eval_discrete_roc(&dets, &gts, 0.5).unwrap().roc;
        let oracle = roc_oracle(&dets, &gts, 0.5);
        assert_eq!(roc.len(), oracle.len(), "seed {seed}");
        for (p, (t, fp, tpr)) in roc.iter().zip(&oracle) {
            assert_eq!(p.threshold, *t);
            assert_eq!(p.false_positives, *fp, "seed {seed} threshold {t}");
            assert!((p.true_positive_rate - tpr).abs() < 1e-12);
        }
    }
}

#[test]
fn recall_is_monotone_in_budget() {
    for seed in 0..100 {
        let (dets, gts) = random_case(seed);
        let mut last = 0.0;
        for k in 0..15 {
            let r = eval_recall(&dets, &gts, 0.5, k as f64).unwrap();
            assert!(r >= last, "seed {seed} k {k}");
            last = r;
        }
        let unlimited = eval_recall(&dets, &gts, 0.5, 1e6).unwrap();
        let roc = eval_discrete_roc(&dets, &gts, 0.5).unwrap();
        assert!((unlimited - roc.tpr_at_fp(usize::MAX)).abs() < 1e-12);
    }
}

#[test]
fn evaluate_bundles_recall_and_roc() {
    let (dets, gts) = random_case(42);
    let r = evaluate(&dets, &gts, 0.5, &[1, 5]).unwrap();
    assert_eq!(r.recall_at_k[&1], eval_recall(&dets, &gts, 0.5, 1.0).unwrap());
    assert_eq!(r.total_gt, gts.iter().map(Vec::len).sum::<usize>());
    assert!(evaluate(&dets, &vec![Vec::new(); dets.len()], 0.5, &[1]).is_err());
}
