//! The detection pipeline: proposals over the coarse pyramid, context
//! pyramid maxout, context-aware refinement and final NMS.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{ensure_arg, Error, Result};
use crate::geometry::{
    anchor_size, context_padding, decode_regression, nms, nms_groups, AnchorConfig, BBox,
    RegressionDelta, ScoredCandidate,
};
use crate::nn::{HeadOutputs, MacCounter, Mode, Model, NetworkSpec, Tensor};
use crate::pyramid::{build_schedule, crop_resize_into, pad_image, resize_to, Image, Slice, PAD_VALUE};

pub const APN_FILE: &str = "apn.acsm";
pub const RNET48_FILE: &str = "rnet48.acsm";
pub const RNET96_FILE: &str = "rnet96.acsm";

const REFINE_BATCH: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeConfig {
    pub anchor: AnchorConfig,
    pub t_apn: f64,
    pub t_r48: f64,
    pub t_r96: f64,
    pub cpm_nms: f64,
    pub stage_nms: f64,
    pub final_nms: f64,
    pub min_face: f64,
    /// Largest face searched for; the image's shorter side when `None`.
    pub max_face: Option<f64>,
    /// Evaluate pyramid slices and refinement batches on the rayon pool.
    pub parallel: bool,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            anchor: AnchorConfig::default(),
            t_apn: 0.5,
            t_r48: 0.5,
            t_r96: 0.7,
            cpm_nms: 0.9,
            stage_nms: 0.7,
            final_nms: 0.4,
            min_face: 12.0,
            max_face: None,
            parallel: false,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        self.anchor.validate()?;
        for (name, t) in [
            ("t_apn", self.t_apn),
            ("t_r48", self.t_r48),
            ("t_r96", self.t_r96),
        ] {
            ensure_arg!(t > 0.0 && t < 1.0, "{name} must be in (0,1), got {t}");
        }
        for (name, t) in [
            ("cpm_nms", self.cpm_nms),
            ("stage_nms", self.stage_nms),
            ("final_nms", self.final_nms),
        ] {
            ensure_arg!((0.0..=1.0).contains(&t), "{name} must be in [0,1], got {t}");
        }
        ensure_arg!(self.min_face >= 1.0, "min_face must be >= 1");
        if let Some(m) = self.max_face {
            ensure_arg!(m >= self.min_face, "max_face must be >= min_face");
        }
        Ok(())
    }

    pub fn with_templates(&self, templates: usize) -> Self {
        let mut c = *self;
        c.anchor.templates = templates;
        c
    }

    /// Pixels of padding around each slice: the context padding of the
    /// smallest anchor, so that a face touching the image border can still
    /// sit in the centre of a window.
    pub fn slice_padding(&self) -> Result<usize> {
        Ok(context_padding(&self.anchor, self.anchor.anchors)?.round() as usize)
    }
}

/// The trained stages of a cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    /// Proposal network in fcn mode.
    pub apn: Model,
    pub rnet48: Option<Model>,
    pub rnet96: Option<Model>,
}

impl DetectorModel {
    pub fn new(apn: Model, rnet48: Option<Model>, rnet96: Option<Model>) -> Result<Self> {
        let apn = apn.fcn_convert();
        let anchors = apn.anchors();
        let channels = apn.spec.input_channels;
        for (name, size, net) in [("rnet48", 48, &rnet48), ("rnet96", 96, &rnet96)] {
            if let Some(m) = net {
                ensure_arg!(
                    m.spec.input_size == size,
                    "{name} input is {}, expected {size}",
                    m.spec.input_size
                );
                ensure_arg!(m.mode() == Mode::Patch, "{name} must be a patch-mode model");
                ensure_arg!(
                    m.anchors() == anchors,
                    "{name} has {} heads, the proposal network {anchors}",
                    m.anchors()
                );
                ensure_arg!(
                    m.spec.input_channels == channels,
                    "{name} channel count differs from the proposal network"
                );
            }
        }
        Ok(Self { apn, rnet48, rnet96 })
    }

    pub fn input_channels(&self) -> usize {
        self.apn.spec.input_channels
    }

    /// Loads `apn.acsm` and, when present, `rnet48.acsm` / `rnet96.acsm`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let apn_path = dir.join(APN_FILE);
        if !apn_path.is_file() {
            return Err(Error::invalid(format!(
                "no proposal model at {}",
                apn_path.display()
            )));
        }
        let apn = Model::load(apn_path)?;
        let opt = |name: &str| -> Result<Option<Model>> {
            let p = dir.join(name);
            if p.is_file() {
                Ok(Some(Model::load(p)?))
            } else {
                Ok(None)
            }
        };
        Self::new(apn, opt(RNET48_FILE)?, opt(RNET96_FILE)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.apn.to_patch().save(dir.join(APN_FILE))?;
        if let Some(m) = &self.rnet48 {
            m.save(dir.join(RNET48_FILE))?;
        }
        if let Some(m) = &self.rnet96 {
            m.save(dir.join(RNET96_FILE))?;
        }
        Ok(())
    }

    fn check_config(&self, cfg: &CascadeConfig) -> Result<()> {
        cfg.validate()?;
        if self.apn.anchors() != cfg.anchor.anchors {
            return Err(Error::Consistency(format!(
                "proposal network has {} heads, configuration {} anchors",
                self.apn.anchors(),
                cfg.anchor.anchors
            )));
        }
        if self.apn.spec.input_size as f64 != cfg.anchor.window {
            return Err(Error::Consistency(format!(
                "proposal window is {}, configuration window {}",
                self.apn.spec.input_size, cfg.anchor.window
            )));
        }
        Ok(())
    }
}

/// Turns one slice's head outputs into candidates in original-image
/// coordinates. Map cell `(u, v)` (column, row) owns the window whose
/// top-left corner is `(u·stride − pad, v·stride − pad)` in the slice;
/// anchor `k` is the centred `S_A(k)` square inside it. Candidates scoring
/// below `cfg.t_apn` are dropped.
pub fn decode_score_map(
    out: &HeadOutputs,
    slice: &Slice,
    pad: usize,
    stride: usize,
    spec: &NetworkSpec,
    cfg: &CascadeConfig,
) -> Result<Vec<ScoredCandidate>> {
    if stride != spec.total_stride() {
        return Err(Error::Consistency(format!(
            "decode stride {stride} differs from the network stride {}",
            spec.total_stride()
        )));
    }
    if out.anchors != cfg.anchor.anchors {
        return Err(Error::Consistency(format!(
            "score map has {} anchors, configuration {}",
            out.anchors, cfg.anchor.anchors
        )));
    }
    let expected = spec.output_dims(slice.height + 2 * pad, slice.width + 2 * pad);
    let (mh, mw) = out.map_dims();
    if expected != Some((mh, mw)) {
        return Err(Error::Consistency(format!(
            "score map {mh}x{mw} does not match slice {}x{} at stride {stride}",
            slice.height, slice.width
        )));
    }
    let mut geometry = Vec::with_capacity(cfg.anchor.anchors);
    for k in 1..=cfg.anchor.anchors {
        geometry.push((context_padding(&cfg.anchor, k)?, anchor_size(&cfg.anchor, k)?));
    }
    let threshold = cfg.t_apn as f32;
    let mut cands = Vec::new();
    for v in 0..mh {
        for u in 0..mw {
            for (k0, &(padding, size)) in geometry.iter().enumerate() {
                let p = out.face_prob(0, k0, v, u);
                if p < threshold {
                    continue;
                }
                let x = (u * stride) as f64 - pad as f64 + padding;
                let y = (v * stride) as f64 - pad as f64 + padding;
                let face = BBox::new(x, y, x + size, y + size);
                let d = out.delta(0, k0, v, u).map(|d| d as f64);
                let b = decode_regression(&face, &RegressionDelta(d))?;
                if !b.is_valid() {
                    continue;
                }
                cands.push(ScoredCandidate {
                    bbox: slice.to_original(&b),
                    score: p as f64,
                    anchor: k0 + 1,
                    template: k0 + 1,
                    slice: slice.index,
                });
            }
        }
    }
    Ok(cands)
}

/// Per-slice record of the proposal stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceReport {
    pub slice: Slice,
    /// Padded input dimensions actually fed to the network.
    pub input_width: usize,
    pub input_height: usize,
    pub macs: u64,
    pub candidates: usize,
}

/// Slices searched for an image under `cfg`.
pub fn proposal_slices(width: usize, height: usize, cfg: &CascadeConfig) -> Result<Vec<Slice>> {
    let max_face = cfg.max_face.unwrap_or(width.min(height) as f64).max(cfg.min_face);
    let sched = build_schedule(width, height, &cfg.anchor, cfg.min_face, max_face)?;
    Ok(sched.context_slices(cfg.anchor.templates))
}

/// Runs the proposal network over the pyramid slices, decodes every slice
/// and applies per-slice NMS at `stage_nms`. Candidates are ordered by
/// slice, then by score.
pub fn propose(img: &Image, apn: &Model, cfg: &CascadeConfig) -> Result<Vec<ScoredCandidate>> {
    Ok(propose_with_report(img, apn, cfg)?.0)
}

pub fn propose_with_report(
    img: &Image,
    apn: &Model,
    cfg: &CascadeConfig,
) -> Result<(Vec<ScoredCandidate>, Vec<SliceReport>)> {
    cfg.validate()?;
    let apn = apn.fcn_convert();
    let img = img.with_channels(apn.spec.input_channels)?;
    let pad = cfg.slice_padding()?;
    let slices = proposal_slices(img.width, img.height, cfg)?;
    let run = |slice: &Slice| -> Result<(Vec<ScoredCandidate>, SliceReport)> {
        let resized = resize_to(&img, slice.width, slice.height)?;
        let padded = pad_image(&resized, pad, PAD_VALUE);
        let counter = MacCounter::new();
        let out = apn.forward_counted(&padded.to_tensor(), Some(&counter))?;
        let cands = decode_score_map(&out, slice, pad, apn.total_stride(), &apn.spec, cfg)?;
        let kept = nms(&cands, cfg.stage_nms);
        let report = SliceReport {
            slice: *slice,
            input_width: padded.width,
            input_height: padded.height,
            macs: counter.total(),
            candidates: kept.len(),
        };
        Ok((kept, report))
    };
    let results: Vec<Result<_>> = if cfg.parallel {
        slices.par_iter().map(run).collect()
    } else {
        slices.iter().map(run).collect()
    };
    let mut all = Vec::new();
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (c, rep) = r?;
        all.extend(c);
        reports.push(rep);
    }
    Ok((all, reports))
}

/// Context pyramid maxout. With one template this is the identity.
/// Otherwise near-duplicates (IoU above `cpm_nms`) arising from the same
/// face seen through different (slice, anchor) templates are merged: the
/// survivor is the highest-scoring member, and its anchor becomes the
/// winning template.
pub fn cpm_merge(candidates: &[ScoredCandidate], cfg: &CascadeConfig) -> Vec<ScoredCandidate> {
    if cfg.anchor.templates <= 1 {
        return candidates.to_vec();
    }
    nms_groups(candidates, cfg.cpm_nms)
        .into_iter()
        .map(|(i, _)| ScoredCandidate {
            template: candidates[i].anchor,
            ..candidates[i]
        })
        .collect()
}

/// Square reference box with the candidate's centre and geometric-mean
/// side; refinement crops and regression are taken relative to it.
pub fn reference_box(b: &BBox) -> BBox {
    let (cx, cy) = b.center();
    let side = (b.width() * b.height()).sqrt();
    BBox::from_center(cx, cy, side, side)
}

/// Window of template `template` around a face box: the reference box
/// grown by `S_W / S_A(template)`.
pub fn template_window(b: &BBox, template: usize, anchor: &AnchorConfig) -> Result<BBox> {
    let r = reference_box(b);
    let ratio = anchor.window_ratio(template)?;
    let (cx, cy) = r.center();
    Ok(BBox::from_center(cx, cy, r.width() * ratio, r.height() * ratio))
}

/// Rescores candidates with a refinement network using each candidate's
/// winning context template, applies its regression, drops scores below
/// `threshold` and finishes with NMS at `stage_nms`.
pub fn refine(
    candidates: &[ScoredCandidate],
    rnet: &Model,
    img: &Image,
    cfg: &CascadeConfig,
    threshold: f64,
) -> Result<Vec<ScoredCandidate>> {
    Ok(refine_counted(candidates, rnet, img, cfg, threshold, None)?)
}

pub fn refine_counted(
    candidates: &[ScoredCandidate],
    rnet: &Model,
    img: &Image,
    cfg: &CascadeConfig,
    threshold: f64,
    counter: Option<&MacCounter>,
) -> Result<Vec<ScoredCandidate>> {
    ensure_arg!(rnet.mode() == Mode::Patch, "refinement network must be in patch mode");
    ensure_arg!(
        rnet.anchors() == cfg.anchor.anchors,
        "refinement network has {} heads, configuration {} anchors",
        rnet.anchors(),
        cfg.anchor.anchors
    );
    let img = img.with_channels(rnet.spec.input_channels)?;
    let image_box = BBox::new(0.0, 0.0, img.width as f64, img.height as f64);
    let mut jobs = Vec::with_capacity(candidates.len());
    for c in candidates {
        let window = template_window(&c.bbox, c.template, &cfg.anchor)?;
        if window.intersection(&image_box) <= 0.0 {
            log::debug!("dropping candidate whose crop lies outside the image: {:?}", c.bbox);
            continue;
        }
        jobs.push((*c, window));
    }
    let size = rnet.spec.input_size;
    let ch = img.channels;
    let per = ch * size * size;
    let score_chunk = |chunk: &[(ScoredCandidate, BBox)]| -> Result<Vec<ScoredCandidate>> {
        let mut data = vec![0.0f32; chunk.len() * per];
        for ((_, window), dst) in chunk.iter().zip(data.chunks_mut(per)) {
            crop_resize_into(&img, window, size, dst);
        }
        let input = Tensor::from_vec([chunk.len(), ch, size, size], data)?;
        let out = rnet.forward_counted(&input, counter)?;
        let mut kept = Vec::new();
        for (n, (c, _)) in chunk.iter().enumerate() {
            let k0 = c.template - 1;
            let p = out.face_prob(n, k0, 0, 0) as f64;
            if p < threshold {
                continue;
            }
            let d = out.delta(n, k0, 0, 0).map(|d| d as f64);
            let b = decode_regression(&reference_box(&c.bbox), &RegressionDelta(d))?;
            if b.is_valid() {
                kept.push(ScoredCandidate { bbox: b, score: p, ..*c });
            }
        }
        Ok(kept)
    };
    let results: Vec<Result<Vec<ScoredCandidate>>> = if cfg.parallel {
        jobs.par_chunks(REFINE_BATCH).map(score_chunk).collect()
    } else {
        jobs.chunks(REFINE_BATCH).map(score_chunk).collect()
    };
    let mut scored = Vec::new();
    for r in results {
        scored.extend(r?);
    }
    Ok(nms(&scored, cfg.stage_nms))
}

/// Candidate counts and work done by one detection.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectReport {
    pub slices: Vec<SliceReport>,
    /// `(stage name, candidates leaving the stage)` in pipeline order.
    pub stages: Vec<(&'static str, usize)>,
    pub proposal_macs: u64,
    pub refine_macs: u64,
}

impl DetectReport {
    pub fn total_macs(&self) -> u64 {
        self.proposal_macs + self.refine_macs
    }
}

/// Full cascade: propose, merge, refine with each available stage, final
/// NMS. Output is sorted by descending score.
pub fn detect(img: &Image, det: &DetectorModel, cfg: &CascadeConfig) -> Result<Vec<ScoredCandidate>> {
    Ok(detect_with_report(img, det, cfg)?.0)
}

pub fn detect_with_report(
    img: &Image,
    det: &DetectorModel,
    cfg: &CascadeConfig,
) -> Result<(Vec<ScoredCandidate>, DetectReport)> {
    det.check_config(cfg)?;
    let img = img.with_channels(det.input_channels())?;
    let (props, slices) = propose_with_report(&img, &det.apn, cfg)?;
    let mut report = DetectReport {
        proposal_macs: slices.iter().map(|s| s.macs).sum(),
        slices,
        ..Default::default()
    };
    report.stages.push(("propose", props.len()));
    let mut cands = cpm_merge(&props, cfg);
    report.stages.push(("cpm", cands.len()));
    let counter = MacCounter::new();
    if let Some(r) = &det.rnet48 {
        cands = refine_counted(&cands, r, &img, cfg, cfg.t_r48, Some(&counter))?;
        report.stages.push(("rnet48", cands.len()));
    }
    if let Some(r) = &det.rnet96 {
        cands = refine_counted(&cands, r, &img, cfg, cfg.t_r96, Some(&counter))?;
        report.stages.push(("rnet96", cands.len()));
    }
    let out = nms(&cands, cfg.final_nms);
    report.stages.push(("final", out.len()));
    report.refine_macs = counter.total();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerParams;

    fn toy_outputs(anchors: usize, h: usize, w: usize, hot: &[(usize, usize, usize, f32)]) -> HeadOutputs {
        let mut raw = Tensor::zeros([1, anchors * 6, h, w]);
        for k in 0..anchors {
            for y in 0..h {
                for x in 0..w {
                    raw.set(0, k * 6, y, x, 5.0);
                }
            }
        }
        for &(k0, y, x, logit) in hot {
            raw.set(0, k0 * 6, y, x, 0.0);
            raw.set(0, k0 * 6 + 1, y, x, logit);
        }
        HeadOutputs::from_raw(&raw, anchors).unwrap()
    }

    fn unit_slice(width: usize, height: usize) -> Slice {
        Slice {
            index: 0,
            scale: 1.0,
            width,
            height,
            scale_x: 1.0,
            scale_y: 1.0,
            lattice: 0,
        }
    }

    fn apn_spec() -> NetworkSpec {
        NetworkSpec::builtin("apn24s").unwrap()
    }

    #[test]
    fn decode_first_cell_first_anchor() {
        let spec = apn_spec();
        let slice = unit_slice(24, 24);
        let out = toy_outputs(4, 1, 1, &[(0, 0, 0, 5.0)]);
        let c = decode_score_map(&out, &slice, 0, 4, &spec, &CascadeConfig::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].bbox, BBox::new(0.0, 0.0, 24.0, 24.0));
        assert_eq!((c[0].anchor, c[0].template, c[0].slice), (1, 1, 0));
    }

    #[test]
    fn decode_offsets_nested_anchor() {
        let spec = apn_spec();
        // 5x4 map needs a slice of 40 x 36
        let slice = unit_slice(40, 36);
        let out = toy_outputs(4, 4, 5, &[(3, 3, 2, 4.0)]);
        let c = decode_score_map(&out, &slice, 0, 4, &spec, &CascadeConfig::default()).unwrap();
        assert_eq!(c.len(), 1);
        let b = c[0].bbox;
        for (got, want) in [b.x1, b.y1, b.x2, b.y2].iter().zip([14.0, 18.0, 26.0, 30.0]) {
            assert!((got - want).abs() < 1e-3, "{b:?}");
        }
        let p = out.face_prob(0, 3, 3, 2) as f64;
        assert_eq!(c[0].score, p);
        assert_eq!(c[0].anchor, 4);
    }

    #[test]
    fn decode_rejects_wrong_stride_or_dims() {
        let spec = apn_spec();
        let out = toy_outputs(4, 1, 1, &[]);
        let cfg = CascadeConfig::default();
        let err = decode_score_map(&out, &unit_slice(24, 24), 0, 8, &spec, &cfg).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
        let err = decode_score_map(&out, &unit_slice(40, 40), 0, 4, &spec, &cfg).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn decode_applies_padding_offset_and_scale() {
        let spec = apn_spec();
        let slice = Slice {
            scale: 0.5,
            scale_x: 0.5,
            scale_y: 0.5,
            ..unit_slice(12, 12)
        };
        let out = toy_outputs(4, 1, 1, &[(0, 0, 0, 5.0)]);
        let c = decode_score_map(&out, &slice, 6, 4, &spec, &CascadeConfig::default()).unwrap();
        assert_eq!(c[0].bbox, BBox::new(-12.0, -12.0, 36.0, 36.0));
    }

    #[test]
    fn cpm_identity_and_max() {
        let cfg = CascadeConfig::default();
        let mut a = ScoredCandidate::new(BBox::new(0.0, 0.0, 100.0, 100.0), 0.6);
        a.anchor = 2;
        a.template = 2;
        let mut b = ScoredCandidate::new(BBox::new(0.0, 0.0, 100.0, 95.0), 0.8);
        b.anchor = 3;
        b.template = 3;
        let input = vec![a, b];
        assert_eq!(cpm_merge(&input, &cfg), input);
        let merged = cpm_merge(&input, &cfg.with_templates(2));
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].score, 0.8);
        assert_eq!(merged[0].template, 3);
    }

    #[test]
    fn template_windows() {
        let a = AnchorConfig::default();
        let b = BBox::new(10.0, 10.0, 22.0, 22.0);
        assert_eq!(template_window(&b, 1, &a).unwrap(), b);
        let w = template_window(&b, 4, &a).unwrap();
        assert!((w.width() - 24.0).abs() < 1e-2 && (w.center().0 - 16.0).abs() < 1e-9);
    }

    #[test]
    fn refine_handles_empty_and_corner() {
        let mut rnet = Model::init(NetworkSpec::builtin("rnet48").unwrap(), 1).unwrap();
        // zero head: every face probability is 0.5 and every delta 0
        if let Some(LayerParams::Conv { weight, bias }) = rnet.params.last_mut() {
            weight.data_mut().fill(0.0);
            bias.fill(0.0);
        }
        let img = Image::filled(40, 30, 1, 0.2);
        let cfg = CascadeConfig::default();
        assert!(refine(&[], &rnet, &img, &cfg, 0.5).unwrap().is_empty());
        let mut c = ScoredCandidate::new(BBox::new(-6.0, -6.0, 6.0, 6.0), 0.9);
        c.template = 4;
        let far = ScoredCandidate::new(BBox::new(500.0, 500.0, 520.0, 520.0), 0.9);
        let out = refine(&[c, far], &rnet, &img, &cfg, 0.4).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.5);
        assert_eq!(out[0].bbox, c.bbox);
    }

    #[test]
    fn detect_on_blank_and_tiny_images() {
        let apn = Model::init(apn_spec(), 3).unwrap();
        let det = DetectorModel::new(apn, None, None).unwrap();
        let cfg = CascadeConfig::default();
        let tiny = Image::filled(10, 10, 1, 0.0);
        assert!(detect(&tiny, &det, &cfg).unwrap().is_empty());
        let img = Image::filled(64, 48, 3, 0.0);
        let (a, rep) = detect_with_report(&img, &det, &cfg).unwrap();
        let b = detect(&img, &det, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(rep.stages.first().unwrap().0, "propose");
        assert!(rep.proposal_macs > 0);
    }

    #[test]
    fn config_consistency_is_checked() {
        let apn = Model::init(apn_spec(), 3).unwrap();
        let det = DetectorModel::new(apn, None, None).unwrap();
        let mut cfg = CascadeConfig::default();
        cfg.anchor.anchors = 3;
        cfg.anchor.templates = 1;
        let img = Image::filled(64, 48, 1, 0.0);
        assert!(matches!(detect(&img, &det, &cfg), Err(Error::Consistency(_))));
        let bad = CascadeConfig {
            t_apn: 1.5,
            ..Default::default()
        };
        assert!(detect(&img, &det, &bad).is_err());
    }
}
