use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::derive_seed;
use super::mining::Sample;
use crate::error::{ensure_arg, Error, Result};
use crate::nn::{backward_and_step, LossBreakdown, Model, NetworkSpec, Sgd, SgdConfig, Target, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrPhase {
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Piecewise-constant learning rate, applied in order.
    pub schedule: Vec<LrPhase>,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Proposal network: 0.1 for 4 epochs, then divided by 5 every 2
    /// epochs, 12 epochs in all; batch 480; λ = 0.5.
    pub fn proposal() -> Self {
        let mut schedule = vec![LrPhase { epochs: 4, lr: 0.1 }];
        let mut lr = 0.1;
        for _ in 0..4 {
            lr /= 5.0;
            schedule.push(LrPhase { epochs: 2, lr });
        }
        Self {
            lambda: 0.5,
            schedule,
            sgd: SgdConfig::default(),
            batch_size: 480,
            seed: 0,
        }
    }

    fn refinement(batch_size: usize, lambda: f64) -> Self {
        Self {
            lambda,
            schedule: vec![
                LrPhase { epochs: 5, lr: 0.01 },
                LrPhase { epochs: 3, lr: 0.001 },
            ],
            sgd: SgdConfig::default(),
            batch_size,
            seed: 0,
        }
    }

    /// 0.01 for 5 epochs then 0.001 for 3; batch 360; λ = 0.5.
    pub fn rnet48() -> Self {
        Self::refinement(360, 0.5)
    }

    /// As [`TrainConfig::rnet48`] with batch 240 and λ = 1.0.
    pub fn rnet96() -> Self {
        Self::refinement(240, 1.0)
    }

    /// Preset by stage name: `apn`, `rnet48` or `rnet96`.
    pub fn for_stage(stage: &str) -> Result<Self> {
        match stage {
            "apn" => Ok(Self::proposal()),
            "rnet48" => Ok(Self::rnet48()),
            "rnet96" => Ok(Self::rnet96()),
            s => Err(Error::invalid(format!("unknown stage {s:?}"))),
        }
    }

    pub fn epochs(&self) -> usize {
        self.schedule.iter().map(|p| p.epochs).sum()
    }

    /// Learning rate of 0-based `epoch`; the last phase extends forever.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut end = 0;
        for p in &self.schedule {
            end += p.epochs;
            if epoch < end {
                return p.lr;
            }
        }
        self.schedule.last().map_or(0.0, |p| p.lr)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_arg!(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be >= 0");
        ensure_arg!(!self.schedule.is_empty(), "empty learning-rate schedule");
        for p in &self.schedule {
            ensure_arg!(p.epochs > 0, "schedule phases need a positive epoch count");
            ensure_arg!(p.lr >= 0.0 && p.lr.is_finite(), "invalid learning rate {}", p.lr);
        }
        ensure_arg!(self.batch_size > 0, "batch size must be positive");
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted means over the epoch's batches.
    pub loss: f64,
    pub cls: f64,
    pub reg: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochStats>,
}

/// Trains a freshly initialized network (seeded with `cfg.seed`).
pub fn train_stage(samples: &[Sample], spec: &NetworkSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = Model::init(spec.clone(), cfg.seed)?;
    train_model(model, samples, cfg)
}

/// Runs the schedule on an existing patch-mode model. Each epoch visits the
/// samples in a seeded shuffled order. On a non-finite loss or gradient the
/// error carries the model as of the last completed epoch.
pub fn train_model(model: Model, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure_arg!(!samples.is_empty(), "no training samples");
    let mut model = model.to_patch();
    let spec = model.spec.clone();
    let (c, s) = (spec.input_channels, spec.input_size);
    let per = c * s * s;
    for smp in samples {
        ensure_arg!(
            smp.patch.len() == per,
            "sample patch has {} values, network expects {per}",
            smp.patch.len()
        );
        ensure_arg!(
            (1..=spec.anchors).contains(&smp.anchor),
            "sample anchor {} outside 1..={}",
            smp.anchor,
            spec.anchors
        );
    }
    let mut sgd = Sgd::new(&model, cfg.sgd);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs());
    let mut checkpoint = model.clone();
    for epoch in 0..cfg.epochs() {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut acc = EpochAccumulator::default();
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut data = Vec::with_capacity(idx.len() * per);
            let mut targets = Vec::with_capacity(idx.len());
            for &i in idx {
                data.extend_from_slice(&samples[i].patch);
                targets.push(Target {
                    kind: samples[i].kind,
                    anchor: samples[i].anchor - 1,
                    delta: samples[i].delta,
                });
            }
            let input = Tensor::from_vec([idx.len(), c, s, s], data)?;
            match backward_and_step(
                &mut model,
                &mut sgd,
                &input,
                &targets,
                lr,
                cfg.lambda,
                Some(&mut dropout_rng),
            ) {
                Ok(loss) => acc.add(&loss),
                Err(Error::TrainingDiverged { detail, .. }) => {
                    return Err(Error::TrainingDiverged {
                        epoch,
                        batch,
                        detail,
                        last_good: Some(Box::new(checkpoint)),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        let stats = acc.finish(epoch, lr, cfg.lambda);
        log::info!(
            "{} epoch {epoch}: lr {lr:.5} loss {:.4} (cls {:.4}, reg {:.4}) acc {:.4}",
            spec.name,
            stats.loss,
            stats.cls,
            stats.reg,
            stats.accuracy
        );
        history.push(stats);
        checkpoint = model.clone();
    }
    Ok(TrainOutcome { model, history })
}

#[derive(Default)]
struct EpochAccumulator {
    cls: f64,
    reg: f64,
    n_cls: usize,
    n_reg: usize,
    correct: usize,
}

impl EpochAccumulator {
    fn add(&mut self, l: &LossBreakdown) {
        self.cls += l.cls * l.n_cls as f64;
        self.reg += l.reg * l.n_reg as f64;
        self.n_cls += l.n_cls;
        self.n_reg += l.n_reg;
        self.correct += l.correct;
    }

    fn finish(&self, epoch: usize, lr: f64, lambda: f64) -> EpochStats {
        let cls = self.cls / self.n_cls.max(1) as f64;
        let reg = self.reg / self.n_reg.max(1) as f64;
        EpochStats {
            epoch,
            lr,
            loss: cls + lambda * reg,
            cls,
            reg,
            accuracy: self.correct as f64 / self.n_cls.max(1) as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_schedules() {
        let p = TrainConfig::proposal();
        assert_eq!(p.epochs(), 12);
        let lrs: Vec<f64> = (0..12).map(|e| p.lr_at(e)).collect();
        let expect = [0.1, 0.1, 0.1, 0.1, 0.02, 0.02, 0.004, 0.004, 8e-4, 8e-4, 1.6e-4, 1.6e-4];
        for (a, b) in lrs.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{lrs:?}");
        }
        let r = TrainConfig::rnet48();
        assert_eq!((r.epochs(), r.lr_at(4), r.lr_at(5), r.batch_size), (8, 0.01, 0.001, 360));
        assert_eq!((TrainConfig::rnet96().lambda, TrainConfig::rnet96().batch_size), (1.0, 240));
        assert_eq!(p.batch_size, 480);
        assert!(TrainConfig::for_stage("nope").is_err());
    }
}
