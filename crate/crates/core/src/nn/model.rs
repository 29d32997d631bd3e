use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{
    conv2d_backward, conv2d_counted, conv2d_train, prelu, prelu_backward, softmax2, ConvCache,
    MacCounter,
};
use super::spec::{LayerSpec, Mode, NetworkSpec, HEAD_CHANNELS_PER_ANCHOR};
use super::tensor::{Scalar, Tensor};
use crate::error::{ensure_arg, Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"ACSM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Learned parameters of one layer. Also used to hold gradients and
/// optimizer state with the same layout.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams<T = f32> {
    Conv { weight: Tensor<T>, bias: Vec<T> },
    PRelu { slopes: Vec<T> },
    Empty,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros_for(spec: &LayerSpec) -> Self {
        match *spec {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => LayerParams::Conv {
                weight: Tensor::zeros([out_channels, in_channels, kernel, kernel]),
                bias: vec![T::zero(); out_channels],
            },
            LayerSpec::Head {
                in_channels,
                anchors,
            } => LayerParams::Conv {
                weight: Tensor::zeros([anchors * HEAD_CHANNELS_PER_ANCHOR, in_channels, 1, 1]),
                bias: vec![T::zero(); anchors * HEAD_CHANNELS_PER_ANCHOR],
            },
            LayerSpec::PRelu { channels } => LayerParams::PRelu {
                slopes: vec![T::zero(); channels],
            },
            LayerSpec::Dropout { .. } => LayerParams::Empty,
        }
    }

    /// Parameter slices in serialization order.
    pub fn slices(&self) -> Vec<&[T]> {
        match self {
            LayerParams::Conv { weight, bias } => vec![weight.data(), bias.as_slice()],
            LayerParams::PRelu { slopes } => vec![slopes.as_slice()],
            LayerParams::Empty => vec![],
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            LayerParams::Conv { weight, bias } => vec![weight.data_mut(), bias.as_mut_slice()],
            LayerParams::PRelu { slopes } => vec![slopes.as_mut_slice()],
            LayerParams::Empty => vec![],
        }
    }
}

/// Per-anchor score and regression maps.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutputs<T = f32> {
    pub anchors: usize,
    /// `(n, 2·anchors, h, w)`; channel `2k+1` is the face probability of
    /// anchor `k` (0-based).
    pub scores: Tensor<T>,
    /// `(n, 4·anchors, h, w)`; channels `4k..4k+4` are the deltas of anchor `k`.
    pub deltas: Tensor<T>,
}

impl<T: Scalar> HeadOutputs<T> {
    pub fn from_raw(raw: &Tensor<T>, anchors: usize) -> Result<Self> {
        let [n, c, h, w] = raw.shape();
        ensure_arg!(
            c == anchors * HEAD_CHANNELS_PER_ANCHOR,
            "head output has {c} channels, expected {}",
            anchors * HEAD_CHANNELS_PER_ANCHOR
        );
        let mut scores = Tensor::zeros([n, 2 * anchors, h, w]);
        let mut deltas = Tensor::zeros([n, 4 * anchors, h, w]);
        for b in 0..n {
            for k in 0..anchors {
                let base = k * HEAD_CHANNELS_PER_ANCHOR;
                for y in 0..h {
                    for x in 0..w {
                        let (p0, p1) = softmax2(raw.at(b, base, y, x), raw.at(b, base + 1, y, x));
                        scores.set(b, 2 * k, y, x, p0);
                        scores.set(b, 2 * k + 1, y, x, p1);
                        for j in 0..4 {
                            deltas.set(b, 4 * k + j, y, x, raw.at(b, base + 2 + j, y, x));
                        }
                    }
                }
            }
        }
        Ok(Self {
            anchors,
            scores,
            deltas,
        })
    }

    pub fn map_dims(&self) -> (usize, usize) {
        (self.scores.h(), self.scores.w())
    }

    /// Face probability of anchor `k` (0-based) at map cell `(x, y)`.
    #[inline]
    pub fn face_prob(&self, n: usize, k: usize, y: usize, x: usize) -> T {
        self.scores.at(n, 2 * k + 1, y, x)
    }

    #[inline]
    pub fn delta(&self, n: usize, k: usize, y: usize, x: usize) -> [T; 4] {
        std::array::from_fn(|j| self.deltas.at(n, 4 * k + j, y, x))
    }
}

enum LayerCache<T> {
    Conv(ConvCache<T>),
    PRelu(Tensor<T>),
    Dropout(Option<Vec<T>>),
}

/// Activations retained by [`Model::forward_train`].
pub struct ForwardTrace<T> {
    caches: Vec<LayerCache<T>>,
    /// Raw head output: per anchor two logits followed by four deltas.
    pub output: Tensor<T>,
}

pub struct Gradients<T> {
    pub layers: Vec<LayerParams<T>>,
    pub input: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    pub spec: NetworkSpec,
    pub params: Vec<LayerParams<T>>,
    pub seed: u64,
}

impl<T: Scalar> Model<T> {
    /// He-style fan-in uniform initialization; PReLU slopes start at 0.25.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .layers
            .iter()
            .map(|layer| {
                let mut p = LayerParams::<T>::zeros_for(layer);
                match (&mut p, layer) {
                    (LayerParams::Conv { weight, .. }, LayerSpec::Conv { .. }) => {
                        let [_, ic, k, _] = weight.shape();
                        let bound = (6.0 / (ic * k * k) as f64).sqrt();
                        for v in weight.data_mut() {
                            *v = T::from_real(rng.gen_range(-bound..bound));
                        }
                    }
                    (LayerParams::Conv { weight, .. }, LayerSpec::Head { in_channels, .. }) => {
                        let bound = (3.0 / *in_channels as f64).sqrt();
                        for v in weight.data_mut() {
                            *v = T::from_real(rng.gen_range(-bound..bound));
                        }
                    }
                    (LayerParams::PRelu { slopes }, _) => slopes.fill(T::from_real(0.25)),
                    _ => {}
                }
                p
            })
            .collect();
        Ok(Self { spec, params, seed })
    }

    pub fn mode(&self) -> Mode {
        self.spec.mode
    }

    pub fn anchors(&self) -> usize {
        self.spec.anchors
    }

    pub fn total_stride(&self) -> usize {
        self.spec.total_stride()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = input.shape();
        ensure_arg!(
            c == self.spec.input_channels,
            "input has {c} channels, model expects {}",
            self.spec.input_channels
        );
        let s = self.spec.input_size;
        match self.spec.mode {
            Mode::Patch => ensure_arg!(
                h == s && w == s,
                "patch-mode input must be {s}x{s}, got {h}x{w}"
            ),
            Mode::Fcn => ensure_arg!(
                h >= s && w >= s,
                "fcn input {h}x{w} is smaller than the {s}x{s} window"
            ),
        }
        Ok(())
    }

    /// Raw head output, without softmax.
    pub fn forward_raw(&self, input: &Tensor<T>, counter: Option<&MacCounter>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (layer, params) in self.spec.layers.iter().zip(&self.params) {
            x = match (layer, params) {
                (LayerSpec::Conv { stride, padding, .. }, LayerParams::Conv { weight, bias }) => {
                    conv2d_counted(&x, weight, bias, *stride, *padding, counter)?
                }
                (LayerSpec::Head { .. }, LayerParams::Conv { weight, bias }) => {
                    conv2d_counted(&x, weight, bias, 1, 0, counter)?
                }
                (LayerSpec::PRelu { .. }, LayerParams::PRelu { slopes }) => prelu(&x, slopes)?,
                (LayerSpec::Dropout { .. }, _) => x,
                _ => return Err(Error::Consistency("parameters do not match layer kinds".into())),
            };
        }
        Ok(x)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<HeadOutputs<T>> {
        self.forward_counted(input, None)
    }

    pub fn forward_counted(
        &self,
        input: &Tensor<T>,
        counter: Option<&MacCounter>,
    ) -> Result<HeadOutputs<T>> {
        let raw = self.forward_raw(input, counter)?;
        HeadOutputs::from_raw(&raw, self.spec.anchors)
    }

    /// Forward pass that keeps what the backward pass needs. Dropout masks
    /// are drawn from `dropout_rng`; with `None` dropout is the identity.
    pub fn forward_train(
        &self,
        input: &Tensor<T>,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardTrace<T>> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut x = input.clone();
        for (layer, params) in self.spec.layers.iter().zip(&self.params) {
            x = match (layer, params) {
                (LayerSpec::Conv { stride, padding, .. }, LayerParams::Conv { weight, bias }) => {
                    let (y, cache) = conv2d_train(&x, weight, bias, *stride, *padding)?;
                    caches.push(LayerCache::Conv(cache));
                    y
                }
                (LayerSpec::Head { .. }, LayerParams::Conv { weight, bias }) => {
                    let (y, cache) = conv2d_train(&x, weight, bias, 1, 0)?;
                    caches.push(LayerCache::Conv(cache));
                    y
                }
                (LayerSpec::PRelu { .. }, LayerParams::PRelu { slopes }) => {
                    let y = prelu(&x, slopes)?;
                    caches.push(LayerCache::PRelu(x));
                    y
                }
                (LayerSpec::Dropout { rate }, _) => match dropout_rng.as_deref_mut() {
                    Some(rng) => {
                        let keep = 1.0 - *rate as f64;
                        let scale = T::from_real(1.0 / keep);
                        let mask: Vec<T> = (0..x.len())
                            .map(|_| if rng.gen_bool(keep) { scale } else { T::zero() })
                            .collect();
                        for (v, m) in x.data_mut().iter_mut().zip(&mask) {
                            *v = *v * *m;
                        }
                        caches.push(LayerCache::Dropout(Some(mask)));
                        x
                    }
                    None => {
                        caches.push(LayerCache::Dropout(None));
                        x
                    }
                },
                _ => return Err(Error::Consistency("parameters do not match layer kinds".into())),
            };
        }
        Ok(ForwardTrace { caches, output: x })
    }

    /// Gradients of a scalar loss with respect to every parameter and the
    /// input, given the loss gradient at the raw head output.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_output: Tensor<T>) -> Result<Gradients<T>> {
        ensure_arg!(
            grad_output.shape() == trace.output.shape(),
            "output gradient shape {:?} does not match {:?}",
            grad_output.shape(),
            trace.output.shape()
        );
        let mut grads: Vec<LayerParams<T>> = self
            .spec
            .layers
            .iter()
            .map(LayerParams::zeros_for)
            .collect();
        let mut g = grad_output;
        for i in (0..self.spec.layers.len()).rev() {
            g = match (&trace.caches[i], &self.params[i]) {
                (LayerCache::Conv(cache), LayerParams::Conv { weight, .. }) => {
                    let cg = conv2d_backward(&g, weight, cache)?;
                    grads[i] = LayerParams::Conv {
                        weight: cg.weight,
                        bias: cg.bias,
                    };
                    cg.input
                }
                (LayerCache::PRelu(input), LayerParams::PRelu { slopes }) => {
                    let (din, ds) = prelu_backward(&g, input, slopes);
                    grads[i] = LayerParams::PRelu { slopes: ds };
                    din
                }
                (LayerCache::Dropout(mask), _) => {
                    if let Some(mask) = mask {
                        for (v, m) in g.data_mut().iter_mut().zip(mask) {
                            *v = *v * *m;
                        }
                    }
                    g
                }
                _ => return Err(Error::Consistency("trace does not match model".into())),
            };
        }
        Ok(Gradients {
            layers: grads,
            input: g,
        })
    }

    /// Same parameters evaluated densely over arbitrary inputs. Converting an
    /// FCN-mode model is a no-op.
    pub fn fcn_convert(&self) -> Model<T> {
        let mut m = self.clone();
        m.spec.mode = Mode::Fcn;
        m
    }

    pub fn to_patch(&self) -> Model<T> {
        let mut m = self.clone();
        m.spec.mode = Mode::Patch;
        m
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .flat_map(|p| p.slices())
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|p| match p {
                    LayerParams::Conv { weight, bias } => LayerParams::Conv {
                        weight: weight.cast(),
                        bias: bias.iter().map(|v| U::from_real(v.to_real())).collect(),
                    },
                    LayerParams::PRelu { slopes } => LayerParams::PRelu {
                        slopes: slopes.iter().map(|v| U::from_real(v.to_real())).collect(),
                    },
                    LayerParams::Empty => LayerParams::Empty,
                })
                .collect(),
        }
    }
}

impl Model<f32> {
    /// Writes the binary model format: magic `ACSM`, `u32` version, `u32`
    /// byte length plus spec text, then all parameters as little-endian
    /// `f32` in layer order (weights before biases).
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut text = self.spec.to_text();
        text.push_str(&format!("seed {}\n", self.seed));
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(text.len() as u32).to_le_bytes())?;
        w.write_all(text.as_bytes())?;
        let mut buf = Vec::with_capacity(self.param_count() * 4);
        for p in &self.params {
            for s in p.slices() {
                for v in s {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: &str| Error::format("model file", d.to_string());
        if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
            return Err(bad("missing ACSM magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MODEL_FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let text = bytes
            .get(12..12 + len)
            .ok_or_else(|| bad("truncated spec text"))?;
        let text = std::str::from_utf8(text).map_err(|_| bad("spec text is not UTF-8"))?;
        let mut seed = 0;
        let mut spec_text = String::new();
        for line in text.lines() {
            match line.strip_prefix("seed ") {
                Some(v) => seed = v.trim().parse().map_err(|_| bad("invalid seed"))?,
                None => {
                    spec_text.push_str(line);
                    spec_text.push('\n');
                }
            }
        }
        let spec = NetworkSpec::parse(&spec_text)?;
        let mut model = Model::<f32> {
            params: spec.layers.iter().map(LayerParams::zeros_for).collect(),
            spec,
            seed,
        };
        let mut floats = bytes[12 + len..].chunks_exact(4);
        if bytes[12 + len..].len() != model.param_count() * 4 {
            return Err(bad(&format!(
                "expected {} parameter bytes, found {}",
                model.param_count() * 4,
                bytes[12 + len..].len()
            )));
        }
        for p in &mut model.params {
            for s in p.slices_mut() {
                for v in s {
                    *v = f32::from_le_bytes(floats.next().unwrap().try_into().unwrap());
                }
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
