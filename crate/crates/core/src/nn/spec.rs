//! Layer-stack descriptions and their text form.
//!
//! The text form is one directive per line:
//!
//! ```text
//! name apn24s
//! input 24          # window size in pixels
//! channels 1        # image channels
//! anchors 4
//! mode patch        # or fcn
//! conv 8 3 1 0      # out-channels kernel stride padding
//! prelu
//! dropout 0.5
//! head              # 1x1 conv, anchors*(2+4) outputs
//! ```
//!
//! Input channel counts are inferred from the preceding layer. `#` starts a
//! comment. [`NetworkSpec::to_text`] emits the canonical form, which parses
//! back to an identical spec.

use std::fmt::Write as _;

use super::ops::conv_out_dim;
use crate::error::{Error, Result};

/// Channels per anchor in the head output: 2 class logits then 4 deltas.
pub const HEAD_CHANNELS_PER_ANCHOR: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    PRelu {
        channels: usize,
    },
    /// Inverted dropout; identity outside training.
    Dropout {
        rate: f32,
    },
    /// Shared 1x1 convolution producing, per anchor, a softmax score pair and
    /// four linear regression outputs.
    Head {
        in_channels: usize,
        anchors: usize,
    },
}

impl LayerSpec {
    pub fn stride(&self) -> usize {
        match self {
            LayerSpec::Conv { stride, .. } => *stride,
            _ => 1,
        }
    }

    /// `(kernel, stride, padding)` for layers that change spatial extent.
    pub fn window(&self) -> Option<(usize, usize, usize)> {
        match *self {
            LayerSpec::Conv {
                kernel,
                stride,
                padding,
                ..
            } => Some((kernel, stride, padding)),
            LayerSpec::Head { .. } => Some((1, 1, 0)),
            _ => None,
        }
    }

    pub fn out_channels(&self, in_channels: usize) -> usize {
        match *self {
            LayerSpec::Conv { out_channels, .. } => out_channels,
            LayerSpec::Head { anchors, .. } => anchors * HEAD_CHANNELS_PER_ANCHOR,
            _ => in_channels,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * (in_channels * kernel * kernel + 1),
            LayerSpec::PRelu { channels } => channels,
            LayerSpec::Dropout { .. } => 0,
            LayerSpec::Head {
                in_channels,
                anchors,
            } => anchors * HEAD_CHANNELS_PER_ANCHOR * (in_channels + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Fixed-size patch classifier; trunk reduces the window to 1x1.
    Patch,
    /// Dense evaluation over inputs at least one window large.
    Fcn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_size: usize,
    pub input_channels: usize,
    pub anchors: usize,
    pub mode: Mode,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Architectures shipped in `arch/`.
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "apn24s" => include_str!("../../arch/apn24s.arch"),
            "apn24" => include_str!("../../arch/apn24.arch"),
            "apn12" => include_str!("../../arch/apn12.arch"),
            "rnet48" => include_str!("../../arch/rnet48.arch"),
            "rnet96" => include_str!("../../arch/rnet96.arch"),
            other => return Err(Error::invalid(format!("unknown architecture '{other}'"))),
        };
        Self::parse(text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::format("network spec", format!("line {line}: {msg}"));
        let mut name = None;
        let mut input_size = None;
        let mut input_channels = 1;
        let mut anchors = None;
        let mut mode = Mode::Patch;
        let mut raw_layers: Vec<(usize, Vec<&str>)> = Vec::new();

        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |idx: usize| -> Result<usize> {
                toks.get(idx)
                    .ok_or_else(|| bad(lineno, "missing value"))?
                    .parse()
                    .map_err(|_| bad(lineno, "expected an integer"))
            };
            match toks[0] {
                "name" => name = Some(toks[1..].join(" ")),
                "input" => input_size = Some(num(1)?),
                "channels" => input_channels = num(1)?,
                "anchors" => anchors = Some(num(1)?),
                "mode" => {
                    mode = match toks.get(1).copied() {
                        Some("patch") => Mode::Patch,
                        Some("fcn") => Mode::Fcn,
                        _ => return Err(bad(lineno, "mode must be patch or fcn")),
                    }
                }
                "conv" | "prelu" | "dropout" | "head" => raw_layers.push((lineno, toks)),
                other => return Err(bad(lineno, &format!("unknown directive '{other}'"))),
            }
        }

        let anchors = anchors.ok_or_else(|| bad(0, "missing 'anchors'"))?;
        let input_size = input_size.ok_or_else(|| bad(0, "missing 'input'"))?;
        let mut channels = input_channels;
        let mut layers = Vec::with_capacity(raw_layers.len());
        for (lineno, toks) in raw_layers {
            let num = |idx: usize| -> Result<usize> {
                toks.get(idx)
                    .ok_or_else(|| bad(lineno, "missing value"))?
                    .parse()
                    .map_err(|_| bad(lineno, "expected an integer"))
            };
            let layer = match toks[0] {
                "conv" => LayerSpec::Conv {
                    in_channels: channels,
                    out_channels: num(1)?,
                    kernel: num(2)?,
                    stride: num(3)?,
                    padding: num(4)?,
                },
                "prelu" => LayerSpec::PRelu { channels },
                "dropout" => {
                    let rate: f32 = toks
                        .get(1)
                        .ok_or_else(|| bad(lineno, "missing rate"))?
                        .parse()
                        .map_err(|_| bad(lineno, "expected a real rate"))?;
                    LayerSpec::Dropout { rate }
                }
                _ => LayerSpec::Head {
                    in_channels: channels,
                    anchors,
                },
            };
            channels = layer.out_channels(channels);
            layers.push(layer);
        }

        let spec = NetworkSpec {
            name: name.unwrap_or_else(|| "unnamed".to_string()),
            input_size,
            input_channels,
            anchors,
            mode,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "input {}", self.input_size);
        let _ = writeln!(s, "channels {}", self.input_channels);
        let _ = writeln!(s, "anchors {}", self.anchors);
        let _ = writeln!(
            s,
            "mode {}",
            match self.mode {
                Mode::Patch => "patch",
                Mode::Fcn => "fcn",
            }
        );
        for layer in &self.layers {
            let _ = match layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => writeln!(s, "conv {out_channels} {kernel} {stride} {padding}"),
                LayerSpec::PRelu { .. } => writeln!(s, "prelu"),
                LayerSpec::Dropout { rate } => writeln!(s, "dropout {rate}"),
                LayerSpec::Head { .. } => writeln!(s, "head"),
            };
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::format("network spec", msg));
        if self.anchors == 0 {
            return fail("anchor count must be at least 1".into());
        }
        if self.input_size == 0 || self.input_channels == 0 {
            return fail("input size and channels must be positive".into());
        }
        let mut channels = self.input_channels;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if in_channels != channels || out_channels == 0 {
                        return fail(format!("layer {i}: channel mismatch"));
                    }
                    if kernel != 1 && kernel != 3 {
                        return fail(format!("layer {i}: kernel must be 1 or 3"));
                    }
                    if stride != 1 && stride != 2 {
                        return fail(format!("layer {i}: stride must be 1 or 2"));
                    }
                    if padding > 1 || (kernel == 1 && padding != 0) {
                        return fail(format!("layer {i}: invalid padding {padding}"));
                    }
                }
                LayerSpec::PRelu { channels: c } => {
                    if c != channels {
                        return fail(format!("layer {i}: prelu slope count mismatch"));
                    }
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return fail(format!("layer {i}: dropout rate must be in [0, 1)"));
                    }
                }
                LayerSpec::Head {
                    in_channels,
                    anchors,
                } => {
                    if in_channels != channels || anchors != self.anchors {
                        return fail(format!("layer {i}: head mismatch"));
                    }
                    if i + 1 != self.layers.len() {
                        return fail("head must be the last layer".into());
                    }
                }
            }
            channels = layer.out_channels(channels);
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Head { .. })) {
            return fail("network must end with a head layer".into());
        }
        match self.output_dims(self.input_size, self.input_size) {
            Some((1, 1)) => Ok(()),
            other => fail(format!(
                "trunk maps a {0}x{0} window to {other:?}, expected 1x1",
                self.input_size
            )),
        }
    }

    /// Product of all layer strides: the step between neighbouring windows
    /// in an FCN score map.
    pub fn total_stride(&self) -> usize {
        self.layers.iter().map(LayerSpec::stride).product()
    }

    /// Score-map extent for an `h x w` input, `None` if the input is smaller
    /// than one window.
    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (mut h, mut w) = (h, w);
        for layer in &self.layers {
            if let Some((k, s, p)) = layer.window() {
                h = conv_out_dim(h, k, s, p)?;
                w = conv_out_dim(w, k, s, p)?;
                if h == 0 || w == 0 {
                    return None;
                }
            }
        }
        Some((h, w))
    }

    pub fn head_channels(&self) -> usize {
        self.anchors * HEAD_CHANNELS_PER_ANCHOR
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Multiply-accumulates of one forward pass over an `h x w` input.
    pub fn macs_for_input(&self, h: usize, w: usize) -> u64 {
        let (mut h, mut w) = (h, w);
        let mut channels = self.input_channels;
        let mut total = 0u64;
        for layer in &self.layers {
            if let Some((k, s, p)) = layer.window() {
                let (Some(oh), Some(ow)) = (conv_out_dim(h, k, s, p), conv_out_dim(w, k, s, p))
                else {
                    return total;
                };
                let out_c = layer.out_channels(channels);
                total += (oh * ow * out_c * channels * k * k) as u64;
                h = oh;
                w = ow;
            }
            channels = layer.out_channels(channels);
        }
        total
    }
}
