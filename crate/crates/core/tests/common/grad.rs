//! Central finite-difference checks in double precision.

use anchor_cascade::nn::{loss_multitask, Model, NetworkSpec, SampleKind, Target, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{randomize, random_tensor};

pub const STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    PRelu,
    Dropout,
    Head,
    Loss,
}

pub const ALL_KINDS: [LayerKind; 5] = [
    LayerKind::Conv,
    LayerKind::PRelu,
    LayerKind::Dropout,
    LayerKind::Head,
    LayerKind::Loss,
];

/// Relative error with a floor so that two tiny values compare as equal.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Small FCN-mode network that exercises `kind`, plus the index of the
/// layer under test.
fn network_for(kind: LayerKind, rng: &mut ChaCha8Rng) -> (NetworkSpec, usize) {
    let ch = rng.gen_range(1..=3);
    let anchors = rng.gen_range(1..=3);
    let out = rng.gen_range(1..=5);
    let (k, stride, pad) = match rng.gen_range(0..4) {
        0 => (1, 1, 0),
        1 => (3, 1, 0),
        2 => (3, 2, 0),
        _ => (3, rng.gen_range(1..=2), 1),
    };
    let conv = format!("conv {out} {k} {stride} {pad}\n");
    let (body, target) = match kind {
        LayerKind::Conv | LayerKind::Loss => (conv, 0),
        LayerKind::PRelu => (conv + "prelu\n", 1),
        LayerKind::Dropout => (conv + "prelu\ndropout 0.3\n", 2),
        LayerKind::Head => (conv, 1),
    };
    // Window size that the single convolution maps to 1x1.
    let input = k - 2 * pad;
    let input = input.max(1);
    let text = format!("name gc\ninput {input}\nchannels {ch}\nanchors {anchors}\nmode fcn\n{body}head\n");
    let spec = NetworkSpec::parse(&text).unwrap_or_else(|e| panic!("{e}: {text}"));
    (spec, target)
}

fn forward(model: &Model<f64>, x: &Tensor<f64>, mask_seed: u64) -> Tensor<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
    model.forward_train(x, Some(&mut r)).unwrap().output
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error over the parameters of the layer under test and the
/// network input, for one random configuration.
pub fn check_layer(kind: LayerKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if kind == LayerKind::Loss {
        return check_loss(&mut rng);
    }
    let (spec, layer) = network_for(kind, &mut rng);
    let mut model = Model::<f64>::init(spec.clone(), seed).unwrap();
    randomize(&mut model, &mut rng, 0.8);
    let h = spec.input_size + rng.gen_range(0..4);
    let w = spec.input_size + rng.gen_range(0..4);
    let n = rng.gen_range(1..=2);
    let x: Tensor<f64> = random_tensor(&mut rng, [n, spec.input_channels, h, w]);
    let mask_seed = rng.gen();
    let out = forward(&model, &x, mask_seed);
    let weights: Tensor<f64> = random_tensor(&mut rng, out.shape());
    let mut tr = ChaCha8Rng::seed_from_u64(mask_seed);
    let trace = model.forward_train(&x, Some(&mut tr)).unwrap();
    let grads = model.backward(&trace, weights.clone()).unwrap();

    let mut worst = 0.0f64;
    let n_slices = model.params[layer].slices().len();
    for s in 0..n_slices {
        let len = model.params[layer].slices()[s].len();
        for i in 0..len {
            let orig = model.params[layer].slices()[s][i];
            model.params[layer].slices_mut()[s][i] = orig + STEP;
            let up = dot(&forward(&model, &x, mask_seed), &weights);
            model.params[layer].slices_mut()[s][i] = orig - STEP;
            let down = dot(&forward(&model, &x, mask_seed), &weights);
            model.params[layer].slices_mut()[s][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_error(grads.layers[layer].slices()[s][i], numeric));
        }
    }
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + STEP;
        let up = dot(&forward(&model, &xp, mask_seed), &weights);
        xp.data_mut()[i] = orig - STEP;
        let down = dot(&forward(&model, &xp, mask_seed), &weights);
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_error(grads.input.data()[i], (up - down) / (2.0 * STEP)));
    }
    worst
}

fn check_loss(rng: &mut ChaCha8Rng) -> f64 {
    let anchors = rng.gen_range(1..=4);
    let n = rng.gen_range(2..=8);
    let mut head: Tensor<f64> = random_tensor(rng, [n, 6 * anchors, 1, 1]);
    for v in head.data_mut() {
        *v *= 3.0;
    }
    let kinds = [SampleKind::Positive, SampleKind::SemiPositive, SampleKind::Negative];
    let mut targets: Vec<Target> = (0..n)
        .map(|_| Target {
            kind: kinds[rng.gen_range(0..3)],
            anchor: rng.gen_range(0..anchors),
            delta: [0; 4].map(|_| rng.gen_range(-0.5f32..0.5)),
        })
        .collect();
    targets[0].kind = SampleKind::Positive;
    let lambda = rng.gen_range(0.0..2.0);
    let (_, grad) = loss_multitask(&head, &targets, lambda).unwrap();
    let mut worst = 0.0f64;
    let mut hp = head.clone();
    for i in 0..head.len() {
        let orig = head.data()[i];
        hp.data_mut()[i] = orig + STEP;
        let up = loss_multitask(&hp, &targets, lambda).unwrap().0.total;
        hp.data_mut()[i] = orig - STEP;
        let down = loss_multitask(&hp, &targets, lambda).unwrap().0.total;
        hp.data_mut()[i] = orig;
        worst = worst.max(rel_error(grad.data()[i], (up - down) / (2.0 * STEP)));
    }
    worst
}

/// Worst error over `configs` random configurations of `kind`.
pub fn check_kind(kind: LayerKind, configs: u64, seed: u64) -> f64 {
    (0..configs)
        .map(|c| check_layer(kind, seed.wrapping_mul(1000).wrapping_add(c)))
        .fold(0.0, f64::max)
}
