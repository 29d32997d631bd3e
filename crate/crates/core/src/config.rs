//! Flat `key = value` configuration files. `#` starts a comment.
//!
//! Detector keys: `window alpha anchors context_alpha templates t_apn t_r48
//! t_r96 cpm_nms stage_nms final_nms min_face max_face parallel`.
//! Training keys additionally: `lambda schedule momentum weight_decay
//! batch_size seed pos_iou neg_iou semi_iou neg_per_pos semi_per_pos
//! positives_per_face max_attempts network hard_negatives mining_threshold`.
//! `schedule` is a comma-separated list of `epochs:lr` phases; `network` is
//! a built-in architecture name or a path to an architecture file.

use std::str::FromStr;

use crate::cascade::CascadeConfig;
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use crate::train::{LrPhase, StagePlan};

/// Ordered `(key, value)` pairs with their line numbers.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::format("config file", format!("line {}: expected key = value", i + 1))
        })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// Applies one detector key. Returns `false` for keys it does not know.
pub fn apply_cascade_key(cfg: &mut CascadeConfig, key: &str, v: &str) -> Result<bool> {
    match key {
        "window" => cfg.anchor.window = num(key, v)?,
        "alpha" => cfg.anchor.alpha = num(key, v)?,
        "anchors" => cfg.anchor.anchors = num(key, v)?,
        "context_alpha" => cfg.anchor.context_alpha = num(key, v)?,
        "templates" | "n_c" => cfg.anchor.templates = num(key, v)?,
        "t_apn" => cfg.t_apn = num(key, v)?,
        "t_r48" => cfg.t_r48 = num(key, v)?,
        "t_r96" => cfg.t_r96 = num(key, v)?,
        "cpm_nms" => cfg.cpm_nms = num(key, v)?,
        "stage_nms" => cfg.stage_nms = num(key, v)?,
        "final_nms" => cfg.final_nms = num(key, v)?,
        "min_face" => cfg.min_face = num(key, v)?,
        "max_face" => {
            cfg.max_face = if v == "none" { None } else { Some(num(key, v)?) }
        }
        "parallel" => cfg.parallel = flag(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn parse_schedule(v: &str) -> Result<Vec<LrPhase>> {
    v.split(',')
        .map(|p| {
            let (e, lr) = p.trim().split_once(':').ok_or_else(|| {
                Error::invalid(format!("schedule phase {p:?} is not epochs:lr"))
            })?;
            Ok(LrPhase {
                epochs: num("schedule", e.trim())?,
                lr: num("schedule", lr.trim())?,
            })
        })
        .collect()
}

/// Applies one training or detector key. Returns `false` for unknown keys.
pub fn apply_plan_key(plan: &mut StagePlan, key: &str, v: &str) -> Result<bool> {
    if apply_cascade_key(&mut plan.cascade, key, v)? {
        return Ok(true);
    }
    let t = &mut plan.train;
    let s = &mut plan.samples;
    match key {
        "lambda" => t.lambda = num(key, v)?,
        "schedule" => t.schedule = parse_schedule(v)?,
        "momentum" => t.sgd.momentum = num(key, v)?,
        "weight_decay" => t.sgd.weight_decay = num(key, v)?,
        "batch_size" => t.batch_size = num(key, v)?,
        "seed" => t.seed = num(key, v)?,
        "pos_iou" => s.pos_iou = num(key, v)?,
        "neg_iou" => s.neg_iou = num(key, v)?,
        "semi_iou" => s.semi_iou = num(key, v)?,
        "neg_per_pos" => s.neg_per_pos = num(key, v)?,
        "semi_per_pos" => s.semi_per_pos = num(key, v)?,
        "positives_per_face" => s.positives_per_face = num(key, v)?,
        "max_attempts" => s.max_attempts = num(key, v)?,
        "network" => {
            plan.network = match NetworkSpec::builtin(v) {
                Ok(spec) => spec,
                Err(_) => NetworkSpec::parse(&std::fs::read_to_string(v)?)?,
            }
        }
        "hard_negatives" => plan.hard_negatives = num(key, v)?,
        "mining_threshold" => plan.mining_threshold = num(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn unknown(line: usize, key: &str) -> Error {
    Error::invalid(format!("line {line}: unknown configuration key {key:?}"))
}

pub fn apply_cascade_config(cfg: &mut CascadeConfig, text: &str) -> Result<()> {
    for (line, k, v) in parse_kv(text)? {
        if !apply_cascade_key(cfg, &k, &v)? {
            return Err(unknown(line, &k));
        }
    }
    cfg.validate()
}

pub fn apply_plan_config(plan: &mut StagePlan, text: &str) -> Result<()> {
    for (line, k, v) in parse_kv(text)? {
        if !apply_plan_key(plan, &k, &v)? {
            return Err(unknown(line, &k));
        }
    }
    plan.cascade.validate()?;
    plan.train.validate()?;
    plan.samples.validate()
}
