//! Sample mining, the stage training loop and the synthetic corpus.

mod mining;
mod stage;
mod synth;
mod trainer;

pub use mining::{
    assign_anchor, hard_negative_mine, mine_corpus, mine_samples, AnnotatedImage, Sample,
    SampleSpec,
};
pub use stage::{run_stage, StagePlan};
pub use synth::{synth_corpus, SynthParams};
pub use trainer::{
    train_model, train_stage, EpochStats, LrPhase, TrainConfig, TrainOutcome,
};

/// Independent per-item seed (SplitMix64 finalizer over `seed` and `index`).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
