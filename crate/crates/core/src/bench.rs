//! Throughput and multiply-accumulate accounting.

use std::time::Instant;

use crate::cascade::{detect_with_report, proposal_slices, CascadeConfig, DetectorModel, SliceReport};
use crate::error::{ensure_arg, Result};
use crate::geometry::{cost_ratio, cost_ratio_geometric, AnchorConfig};
use crate::nn::{LayerSpec, MacCounter, Model, NetworkSpec, Tensor};
use crate::pyramid::{build_schedule, PAD_VALUE};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub cpu: String,
    pub images: usize,
    pub repetitions: usize,
    /// Median over repetitions of images per second.
    pub fps: f64,
    pub macs_per_image: f64,
    pub proposal_macs_per_image: f64,
    pub slices_per_image: f64,
    /// `(stage, mean candidates per image)` in pipeline order.
    pub candidates_per_stage: Vec<(&'static str, f64)>,
    /// Proposal MACs of the first image, and of the dense single-anchor
    /// pyramid over the same face range.
    pub coarse_macs: u64,
    pub dense_macs: u64,
    pub image_dims: (usize, usize),
    pub cost_ratio: f64,
    pub cost_ratio_geometric: f64,
}

impl BenchReport {
    pub fn mac_ratio(&self) -> f64 {
        self.coarse_macs as f64 / self.dense_macs.max(1) as f64
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "cpu: {}\nimages: {} (first {}x{}), repetitions: {}\nfps (median): {:.2}\n\
             macs/image: {:.0} (proposal {:.0})\nslices/image: {:.2}\n",
            self.cpu,
            self.images,
            self.image_dims.0,
            self.image_dims.1,
            self.repetitions,
            self.fps,
            self.macs_per_image,
            self.proposal_macs_per_image,
            self.slices_per_image
        );
        for (stage, n) in &self.candidates_per_stage {
            s.push_str(&format!("candidates after {stage}: {n:.2}\n"));
        }
        s.push_str(&format!(
            "coarse/dense proposal macs: {} / {} = {:.4}\n\
             cost model: {:.4}, geometric {:.4}\n",
            self.coarse_macs,
            self.dense_macs,
            self.mac_ratio(),
            self.cost_ratio,
            self.cost_ratio_geometric
        ));
        s
    }
}

fn cpu_name() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string())
}

/// The proposal network's trunk with a single-anchor head.
pub fn single_anchor_spec(spec: &NetworkSpec) -> NetworkSpec {
    let mut s = spec.clone();
    s.anchors = 1;
    for l in &mut s.layers {
        if let LayerSpec::Head { anchors, .. } = l {
            *anchors = 1;
        }
    }
    s
}

/// Runs `model` over every slice of a pyramid on a blank image of the given
/// size and returns the measured MACs of each slice. The slices are those
/// of the coarse schedule for `cfg`, padded as in detection.
pub fn measure_proposal_macs(
    model: &Model,
    width: usize,
    height: usize,
    cfg: &CascadeConfig,
) -> Result<Vec<SliceReport>> {
    let model = model.fcn_convert();
    let pad = cfg.slice_padding()?;
    let c = model.spec.input_channels;
    let mut out = Vec::new();
    for slice in proposal_slices(width, height, cfg)? {
        let (w, h) = (slice.width + 2 * pad, slice.height + 2 * pad);
        let counter = MacCounter::new();
        model.forward_counted(&Tensor::filled([1, c, h, w], PAD_VALUE), Some(&counter))?;
        out.push(SliceReport {
            slice,
            input_width: w,
            input_height: h,
            macs: counter.total(),
            candidates: 0,
        });
    }
    Ok(out)
}

/// Measured MACs of a dense single-anchor pyramid (step `α`, first scale
/// `S_W / min_face`) over the same face range, using the given trunk.
pub fn measure_dense_macs(
    spec: &NetworkSpec,
    width: usize,
    height: usize,
    cfg: &CascadeConfig,
) -> Result<Vec<SliceReport>> {
    let model = Model::init(single_anchor_spec(spec), 0)?;
    let dense = CascadeConfig {
        anchor: AnchorConfig {
            anchors: 1,
            templates: 1,
            ..cfg.anchor
        },
        ..*cfg
    };
    measure_proposal_macs(&model, width, height, &dense)
}

/// Number of dense-pyramid slices for the same face range.
pub fn dense_slice_count(width: usize, height: usize, cfg: &CascadeConfig) -> Result<usize> {
    let a = AnchorConfig {
        anchors: 1,
        templates: 1,
        ..cfg.anchor
    };
    let max_face = cfg.max_face.unwrap_or(width.min(height) as f64).max(cfg.min_face);
    Ok(build_schedule(width, height, &a, cfg.min_face, max_face)?.scales.len())
}

/// Times `reps` passes of [`crate::cascade::detect`] over `images` (single
/// threaded unless `cfg.parallel`) and gathers MAC and candidate counts.
pub fn bench_throughput(
    det: &DetectorModel,
    images: &[crate::pyramid::Image],
    cfg: &CascadeConfig,
    reps: usize,
) -> Result<BenchReport> {
    ensure_arg!(!images.is_empty(), "no images to benchmark");
    ensure_arg!(reps >= 1, "need at least one repetition");
    let mut fps = Vec::with_capacity(reps);
    let mut macs = 0u64;
    let mut proposal = 0u64;
    let mut slices = 0usize;
    let mut stages: Vec<(&'static str, f64)> = Vec::new();
    for rep in 0..reps {
        let start = Instant::now();
        for img in images {
            let (_, r) = detect_with_report(img, det, cfg)?;
            if rep == 0 {
                macs += r.total_macs();
                proposal += r.proposal_macs;
                slices += r.slices.len();
                if stages.is_empty() {
                    stages = r.stages.iter().map(|&(s, _)| (s, 0.0)).collect();
                }
                for (acc, &(_, n)) in stages.iter_mut().zip(&r.stages) {
                    acc.1 += n as f64;
                }
            }
        }
        fps.push(images.len() as f64 / start.elapsed().as_secs_f64().max(1e-12));
    }
    fps.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = images.len() as f64;
    let first = &images[0];
    let coarse: u64 = measure_proposal_macs(&det.apn, first.width, first.height, cfg)?
        .iter()
        .map(|s| s.macs)
        .sum();
    let dense: u64 = measure_dense_macs(&det.apn.spec, first.width, first.height, cfg)?
        .iter()
        .map(|s| s.macs)
        .sum();
    Ok(BenchReport {
        cpu: cpu_name(),
        images: images.len(),
        repetitions: reps,
        fps: fps[fps.len() / 2],
        macs_per_image: macs as f64 / n,
        proposal_macs_per_image: proposal as f64 / n,
        slices_per_image: slices as f64 / n,
        candidates_per_stage: stages.into_iter().map(|(s, c)| (s, c / n)).collect(),
        coarse_macs: coarse,
        dense_macs: dense,
        image_dims: (first.width, first.height),
        cost_ratio: cost_ratio(cfg.anchor.alpha, cfg.anchor.anchors)?,
        cost_ratio_geometric: cost_ratio_geometric(cfg.anchor.alpha, cfg.anchor.anchors)?,
    })
}
