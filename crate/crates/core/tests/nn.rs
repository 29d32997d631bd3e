mod common;

use anchor_cascade::nn::{
    backward_and_step, loss_multitask, Model, NetworkSpec, SampleKind, Sgd, SgdConfig, Target,
    Tensor,
};
use anchor_cascade::train::{mine_corpus, synth_corpus, train_model, SampleSpec, SynthParams, TrainConfig, LrPhase};
use anchor_cascade::geometry::AnchorConfig;
use common::grad::{check_kind, ALL_KINDS};
use common::{fcn_patch_gap, random_tensor, rng};
use proptest::prelude::*;

#[test]
fn gradients_match_finite_differences() {
    for kind in ALL_KINDS {
        let worst = check_kind(kind, 20, 7);
        assert!(worst < 1e-4, "{kind:?}: relative error {worst:e}");
    }
}

#[test]
fn fcn_matches_sliding_patches() {
    let worst = (0..100).map(fcn_patch_gap).fold(0.0, f64::max);
    assert!(worst < 1e-5, "max |fcn - patch| = {worst:e}");
}

#[test]
fn builtin_fcn_matches_patches() {
    for name in ["apn24s", "apn24", "apn12"] {
        let spec = NetworkSpec::builtin(name).unwrap();
        let model = Model::<f32>::init(spec.clone(), 3).unwrap();
        let s = spec.input_size;
        let stride = spec.total_stride();
        let mut r = rng(11);
        let img: Tensor = random_tensor(&mut r, [1, 1, s + 3 * stride, s + 2 * stride]);
        let dense = model.fcn_convert().forward(&img).unwrap();
        let (mh, mw) = dense.map_dims();
        assert_eq!((mh, mw), (4, 3), "{name}");
        for v in 0..mh {
            for u in 0..mw {
                let mut patch = Tensor::zeros([1, 1, s, s]);
                for y in 0..s {
                    for x in 0..s {
                        patch.set(0, 0, y, x, img.at(0, 0, v * stride + y, u * stride + x));
                    }
                }
                let p = model.forward(&patch).unwrap();
                for k in 0..spec.anchors {
                    assert!((p.face_prob(0, k, 0, 0) - dense.face_prob(0, k, v, u)).abs() < 1e-5);
                }
            }
        }
    }
}

fn targets(kinds: &[SampleKind], anchors: usize) -> Vec<Target> {
    kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| Target {
            kind,
            anchor: i % anchors,
            delta: [0.3, -0.2, 0.1, 0.05],
        })
        .collect()
}

#[test]
fn loss_gradient_is_masked_by_sample_kind() {
    let mut r = rng(5);
    let head: Tensor<f64> = random_tensor(&mut r, [3, 12, 1, 1]);
    let t = targets(&[SampleKind::Positive, SampleKind::SemiPositive, SampleKind::Negative], 2);
    let (_, g) = loss_multitask(&head, &t, 1.0).unwrap();
    for n in 0..3 {
        for c in 0..12 {
            let v = g.at(n, c, 0, 0);
            let anchor = c / 6;
            let slot = c % 6;
            let expect_nonzero = anchor == t[n].anchor
                && match t[n].kind {
                    SampleKind::Positive => true,
                    SampleKind::SemiPositive => slot >= 2,
                    SampleKind::Negative => slot < 2,
                };
            assert_eq!(v != 0.0, expect_nonzero, "sample {n} channel {c}");
        }
    }
}

#[test]
fn zero_lambda_leaves_regression_to_weight_decay() {
    let spec = NetworkSpec::builtin("apn24s").unwrap();
    let mut model = Model::init(spec, 1).unwrap();
    let before = model.clone();
    let mut r = rng(2);
    let x: Tensor = random_tensor(&mut r, [6, 1, 24, 24]);
    let t = targets(&[SampleKind::Positive, SampleKind::SemiPositive, SampleKind::Negative].repeat(2), 4);
    let wd = 1e-3;
    let mut sgd = Sgd::new(&model, SgdConfig { momentum: 0.0, weight_decay: wd });
    let lr = 0.1;
    backward_and_step(&mut model, &mut sgd, &x, &t, lr, 0.0, None).unwrap();
    let head = model.params.len() - 1;
    let (w1, w0) = match (&model.params[head], &before.params[head]) {
        (
            anchor_cascade::nn::LayerParams::Conv { weight: a, bias: ab },
            anchor_cascade::nn::LayerParams::Conv { weight: b, bias: bb },
        ) => ((a, ab), (b, bb)),
        _ => unreachable!(),
    };
    let [oc, ic, _, _] = w1.0.shape();
    for o in 0..oc {
        if o % 6 < 2 {
            continue;
        }
        for i in 0..ic {
            let expect = w0.0.at(o, i, 0, 0) * (1.0 - (lr * wd) as f32);
            assert!((w1.0.at(o, i, 0, 0) - expect).abs() < 1e-7);
        }
        assert!((w1.1[o] - w0.1[o] * (1.0 - (lr * wd) as f32)).abs() < 1e-7);
    }
}

#[test]
fn small_sample_set_is_memorized() {
    let set = synth_corpus(3, &SynthParams { n_images: 40, ..Default::default() }).unwrap();
    let cfg = AnchorConfig::default();
    let mut samples = mine_corpus(&set, &SampleSpec::default(), &cfg, 24, 9).unwrap();
    samples.retain(|s| s.kind != SampleKind::SemiPositive);
    samples.truncate(480);
    assert_eq!(samples.len(), 480);
    let model = Model::init(NetworkSpec::builtin("apn24s").unwrap(), 4).unwrap();
    let tc = TrainConfig {
        schedule: vec![LrPhase { epochs: 30, lr: 0.02 }, LrPhase { epochs: 20, lr: 0.005 }],
        batch_size: 32,
        ..TrainConfig::proposal()
    };
    let out = train_model(model, &samples, &tc).unwrap();
    let last = out.history.last().unwrap();
    assert!(last.accuracy > 0.99, "training accuracy {}", last.accuracy);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_finite_for_extreme_logits(z in -200.0f64..200.0, d in -5.0f32..5.0) {
        let head = Tensor::from_vec([1, 6, 1, 1], vec![z, -z, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let t = [Target { kind: SampleKind::Positive, anchor: 0, delta: [d; 4] }];
        let (l, g) = loss_multitask(&head, &t, 1.0).unwrap();
        prop_assert!(l.total.is_finite());
        prop_assert!(g.all_finite());
    }
}
