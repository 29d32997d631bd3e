use super::mining::{hard_negative_mine, mine_corpus, AnnotatedImage, SampleSpec};
use super::trainer::{train_stage, LrPhase, TrainConfig, TrainOutcome};
use crate::cascade::{CascadeConfig, DetectorModel};
use crate::error::{ensure_arg, Error, Result};
use crate::nn::NetworkSpec;

/// Everything needed to train one cascade stage from annotated images.
#[derive(Clone, Debug, PartialEq)]
pub struct StagePlan {
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub samples: SampleSpec,
    /// Detector configuration; its anchor geometry labels the samples and it
    /// drives hard-negative mining for refinement stages.
    pub cascade: CascadeConfig,
    /// Hard negatives mined from the previous stages (refinement only).
    pub hard_negatives: usize,
    /// Proposal threshold used while mining hard negatives.
    pub mining_threshold: f64,
}

impl StagePlan {
    /// Training as described for full-size datasets.
    pub fn full(stage: &str) -> Result<Self> {
        let network = NetworkSpec::builtin(match stage {
            "apn" => "apn24",
            s => s,
        })?;
        Ok(Self {
            network,
            train: TrainConfig::for_stage(stage)?,
            samples: SampleSpec::default(),
            cascade: CascadeConfig::default(),
            hard_negatives: if stage == "apn" { 0 } else { 100_000 },
            mining_threshold: 0.3,
        })
    }

    /// Reduced schedule for the synthetic desk-scale corpus: small batches
    /// and fewer epochs, with the small proposal network.
    pub fn desk(stage: &str) -> Result<Self> {
        let mut plan = Self::full(stage)?;
        match stage {
            "apn" => {
                plan.network = NetworkSpec::builtin("apn24s")?;
                plan.train.batch_size = 64;
                plan.train.schedule = vec![
                    LrPhase { epochs: 4, lr: 0.05 },
                    LrPhase { epochs: 2, lr: 0.01 },
                    LrPhase { epochs: 2, lr: 0.002 },
                ];
            }
            _ => {
                plan.train.batch_size = 64;
                plan.train.schedule = vec![
                    LrPhase { epochs: 4, lr: 0.02 },
                    LrPhase { epochs: 2, lr: 0.004 },
                ];
                plan.samples.positives_per_face = 6;
                plan.hard_negatives = 8_000;
            }
        }
        Ok(plan)
    }

    pub fn is_refinement(&self) -> bool {
        self.network.mode == crate::nn::Mode::Patch && self.network.input_size > 24
    }
}

/// Mines samples (plus hard negatives from `prev` for refinement stages)
/// and trains the stage network.
pub fn run_stage(plan: &StagePlan, set: &[AnnotatedImage], prev: Option<&DetectorModel>) -> Result<TrainOutcome> {
    ensure_arg!(!set.is_empty(), "no training images");
    let size = plan.network.input_size;
    let channels = plan.network.input_channels;
    let converted: Vec<AnnotatedImage>;
    let set = if set.iter().all(|a| a.image.channels == channels) {
        set
    } else {
        converted = set
            .iter()
            .map(|a| {
                Ok(AnnotatedImage {
                    image: a.image.with_channels(channels)?,
                    boxes: a.boxes.clone(),
                })
            })
            .collect::<Result<_>>()?;
        &converted
    };
    let mut samples = mine_corpus(set, &plan.samples, &plan.cascade.anchor, size, plan.train.seed)?;
    if plan.hard_negatives > 0 {
        let det = prev.ok_or_else(|| {
            Error::invalid("hard-negative mining needs the previously trained stages")
        })?;
        let mut cfg = plan.cascade;
        cfg.t_apn = plan.mining_threshold;
        let hard = hard_negative_mine(det, &cfg, set, &plan.samples, plan.hard_negatives, size)?;
        log::info!("{} hard negatives", hard.len());
        samples.extend(hard);
    }
    train_stage(&samples, &plan.network, &plan.train)
}
