use rand_chacha::ChaCha8Rng;

use super::loss::{loss_multitask, LossBreakdown, Target};
use super::model::{LayerParams, Model};
use super::tensor::Tensor;
use crate::error::{ensure_arg, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 2e-5,
        }
    }
}

/// Momentum SGD with L2 weight decay:
/// `v ← μ·v − lr·(g + wd·w)`, `w ← w + v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: Vec<LayerParams<f32>>,
}

impl Sgd {
    pub fn new(model: &Model, config: SgdConfig) -> Self {
        let velocity = model
            .params
            .iter()
            .map(|p| {
                let mut z = p.clone();
                for s in z.slices_mut() {
                    s.fill(0.0);
                }
                z
            })
            .collect();
        Self { config, velocity }
    }

    pub fn step(&mut self, model: &mut Model, grads: &[LayerParams<f32>], lr: f64) {
        let mu = self.config.momentum as f32;
        let wd = self.config.weight_decay as f32;
        let lr = lr as f32;
        for ((p, g), v) in model.params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((ps, gs), vs) in p.slices_mut().into_iter().zip(g.slices()).zip(v.slices_mut()) {
                for ((w, &gv), vel) in ps.iter_mut().zip(gs).zip(vs.iter_mut()) {
                    *vel = mu * *vel - lr * (gv + wd * *w);
                    *w += *vel;
                }
            }
        }
    }
}

/// One mini-batch update. Fails with `TrainingDiverged` (model untouched)
/// if the loss or any gradient is non-finite.
pub fn backward_and_step(
    model: &mut Model,
    sgd: &mut Sgd,
    input: &Tensor,
    targets: &[Target],
    lr: f64,
    lambda: f64,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<LossBreakdown> {
    ensure_arg!(lr >= 0.0 && lr.is_finite(), "learning rate must be finite and >= 0");
    let trace = model.forward_train(input, dropout_rng)?;
    let (loss, grad_out) = loss_multitask(&trace.output, targets, lambda)?;
    let diverged = |detail: String| Error::TrainingDiverged {
        epoch: 0,
        batch: 0,
        detail,
        last_good: None,
    };
    if !loss.total.is_finite() {
        return Err(diverged(format!(
            "non-finite loss (cls {}, reg {})",
            loss.cls, loss.reg
        )));
    }
    let grads = model.backward(&trace, grad_out)?;
    let finite = grads
        .layers
        .iter()
        .flat_map(|p| p.slices())
        .all(|s| s.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(diverged("non-finite gradient".into()));
    }
    sgd.step(model, &grads.layers, lr);
    Ok(loss)
}
