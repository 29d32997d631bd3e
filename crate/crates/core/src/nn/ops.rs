//! Convolution, PReLU and softmax kernels with their backward passes.
//!
//! Convolution is lowered to `im2col` followed by a row-major GEMM whose
//! column axis spans the whole batch, so 1x1 feature maps at the end of a
//! patch classifier still produce long inner loops.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{Scalar, Tensor};
use crate::error::{ensure_arg, Result};

/// Counts multiply-accumulates executed by [`conv2d`].
#[derive(Debug, Default)]
pub struct MacCounter {
    total: AtomicU64,
}

impl MacCounter {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn add(&self, macs: u64) {
        self.total.fetch_add(macs, Ordering::Relaxed);
    }
    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }
    pub fn reset(&self) {
        self.total.store(0, Ordering::Relaxed);
    }
}

/// Output extent of a convolution along one axis, or `None` if it would be
/// empty.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input: [usize; 4],
        weight: [usize; 4],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let [batch, in_c, in_h, in_w] = input;
        let [out_c, w_in, kh, kw] = weight;
        ensure_arg!(kh == kw, "kernel must be square, got {kh}x{kw}");
        ensure_arg!(kh == 1 || kh == 3, "kernel size must be 1 or 3, got {kh}");
        ensure_arg!(stride == 1 || stride == 2, "stride must be 1 or 2, got {stride}");
        ensure_arg!(padding <= 1, "padding must be 0 or 1, got {padding}");
        ensure_arg!(
            w_in == in_c,
            "weight expects {w_in} input channels, input has {in_c}"
        );
        let out_h = conv_out_dim(in_h, kh, stride, padding);
        let out_w = conv_out_dim(in_w, kh, stride, padding);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) if out_h > 0 && out_w > 0 => Ok(Self {
                batch,
                in_c,
                in_h,
                in_w,
                out_c,
                kernel: kh,
                stride,
                padding,
                out_h,
                out_w,
            }),
            _ => Err(crate::error::Error::invalid(format!(
                "convolution of {in_h}x{in_w} with k={kh} s={stride} p={padding} has no output"
            ))),
        }
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn columns(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    pub fn macs(&self) -> u64 {
        (self.columns() * self.out_c * self.patch_len()) as u64
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Lowers `input` into a `[in_c*k*k, batch*out_h*out_w]` matrix.
fn im2col<T: Scalar>(input: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols = g.columns();
    let mut col = vec![T::zero(); g.patch_len() * cols];
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    for ic in 0..g.in_c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ic * k + ky) * k + kx;
                let dst_row = &mut col[row * cols..(row + 1) * cols];
                for b in 0..g.batch {
                    let src = &input[(b * g.in_c + ic) * plane..(b * g.in_c + ic + 1) * plane];
                    for oy in 0..g.out_h {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= g.in_h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                        let dst = &mut dst_row[b * out_plane + oy * g.out_w..][..g.out_w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < g.in_w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-adds a column-gradient matrix back onto input coordinates.
fn col2im<T: Scalar>(col: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols = g.columns();
    let plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let mut out = vec![T::zero(); g.batch * g.in_c * plane];
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    for ic in 0..g.in_c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ic * k + ky) * k + kx;
                let src_row = &col[row * cols..(row + 1) * cols];
                for b in 0..g.batch {
                    let dst = &mut out[(b * g.in_c + ic) * plane..(b * g.in_c + ic + 1) * plane];
                    for oy in 0..g.out_h {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= g.in_h as isize {
                            continue;
                        }
                        let src = &src_row[b * out_plane + oy * g.out_w..][..g.out_w];
                        let dst_row = &mut dst[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                        for (ox, &v) in src.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < g.in_w as isize {
                                dst_row[ix as usize] = dst_row[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Batch-major NCHW → channel-major `[c, n*h*w]`.
fn to_channel_major<T: Scalar>(data: &[T], n: usize, c: usize, hw: usize) -> Vec<T> {
    if n == 1 {
        return data.to_vec();
    }
    let mut out = vec![T::zero(); data.len()];
    for b in 0..n {
        for ch in 0..c {
            out[ch * n * hw + b * hw..][..hw].copy_from_slice(&data[(b * c + ch) * hw..][..hw]);
        }
    }
    out
}

fn from_channel_major<T: Scalar>(data: &[T], n: usize, c: usize, hw: usize) -> Vec<T> {
    if n == 1 {
        return data.to_vec();
    }
    let mut out = vec![T::zero(); data.len()];
    for b in 0..n {
        for ch in 0..c {
            out[(b * c + ch) * hw..][..hw].copy_from_slice(&data[ch * n * hw + b * hw..][..hw]);
        }
    }
    out
}

const COL_BLOCK: usize = 256;

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    s0 + s1 + tail
}

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major.
fn gemm_nn<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + COL_BLOCK).min(n);
        let mut i = 0;
        while i + 4 <= m {
            let (c0, rest) = c[i * n..].split_at_mut(n);
            let (c1, rest) = rest.split_at_mut(n);
            let (c2, rest) = rest.split_at_mut(n);
            let c3 = &mut rest[..n];
            let (c0, c1, c2, c3) = (
                &mut c0[j0..j1],
                &mut c1[j0..j1],
                &mut c2[j0..j1],
                &mut c3[j0..j1],
            );
            for p in 0..k {
                let a0 = a[i * k + p];
                let a1 = a[(i + 1) * k + p];
                let a2 = a[(i + 2) * k + p];
                let a3 = a[(i + 3) * k + p];
                let brow = &b[p * n + j0..p * n + j1];
                for (j, &bv) in brow.iter().enumerate() {
                    c0[j] = c0[j] + a0 * bv;
                    c1[j] = c1[j] + a1 * bv;
                    c2[j] = c2[j] + a2 * bv;
                    c3[j] = c3[j] + a3 * bv;
                }
            }
            i += 4;
        }
        while i < m {
            let crow = &mut c[i * n + j0..i * n + j1];
            for p in 0..k {
                axpy(crow, a[i * k + p], &b[p * n + j0..p * n + j1]);
            }
            i += 1;
        }
        j0 = j1;
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`.
fn gemm_nt<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            c[i * k + p] = c[i * k + p] + dot(arow, &b[p * n..(p + 1) * n]);
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`.
fn gemm_tn<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    for p in 0..k {
        let crow = &mut c[p * n..(p + 1) * n];
        for i in 0..m {
            axpy(crow, a[i * k + p], &b[i * n..(i + 1) * n]);
        }
    }
}

/// Intermediate state kept by a training forward pass for [`conv2d_backward`].
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    pub geometry: ConvGeometry,
    col: Vec<T>,
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

/// Direct cross-correlation with zero padding.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    conv2d_counted(input, weight, bias, stride, padding, None)
}

pub fn conv2d_counted<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
    counter: Option<&MacCounter>,
) -> Result<Tensor<T>> {
    let (out, _) = conv2d_impl(input, weight, bias, stride, padding, counter, false)?;
    Ok(out)
}

/// Forward pass that also returns the lowered input for the backward pass.
pub fn conv2d_train<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, ConvCache<T>)> {
    let (out, cache) = conv2d_impl(input, weight, bias, stride, padding, None, true)?;
    Ok((out, cache.expect("cache requested")))
}

fn conv2d_impl<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
    counter: Option<&MacCounter>,
    keep_cache: bool,
) -> Result<(Tensor<T>, Option<ConvCache<T>>)> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    ensure_arg!(
        bias.len() == g.out_c,
        "bias has {} entries, expected {}",
        bias.len(),
        g.out_c
    );
    let col = if g.is_pointwise() {
        to_channel_major(input.data(), g.batch, g.in_c, g.in_h * g.in_w)
    } else {
        im2col(input.data(), &g)
    };
    let cols = g.columns();
    let mut out = vec![T::zero(); g.out_c * cols];
    for (oc, row) in out.chunks_exact_mut(cols).enumerate() {
        row.fill(bias[oc]);
    }
    gemm_nn(g.out_c, cols, g.patch_len(), weight.data(), &col, &mut out);
    if let Some(counter) = counter {
        counter.add(g.macs());
    }
    let out = from_channel_major(&out, g.batch, g.out_c, g.out_h * g.out_w);
    let tensor = Tensor::from_vec([g.batch, g.out_c, g.out_h, g.out_w], out)?;
    let cache = keep_cache.then(|| ConvCache { geometry: g, col });
    Ok((tensor, cache))
}

pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    cache: &ConvCache<T>,
) -> Result<ConvGrads<T>> {
    let g = &cache.geometry;
    ensure_arg!(
        grad_out.shape() == [g.batch, g.out_c, g.out_h, g.out_w],
        "gradient shape {:?} does not match convolution output",
        grad_out.shape()
    );
    let cols = g.columns();
    let k = g.patch_len();
    let dout = to_channel_major(grad_out.data(), g.batch, g.out_c, g.out_h * g.out_w);

    let bias: Vec<T> = dout.chunks_exact(cols).map(|r| r.iter().copied().sum()).collect();

    let mut dw = vec![T::zero(); g.out_c * k];
    gemm_nt(g.out_c, cols, k, &dout, &cache.col, &mut dw);

    let mut dcol = vec![T::zero(); k * cols];
    gemm_tn(g.out_c, cols, k, weight.data(), &dout, &mut dcol);
    let din = if g.is_pointwise() {
        from_channel_major(&dcol, g.batch, g.in_c, g.in_h * g.in_w)
    } else {
        col2im(&dcol, g)
    };

    Ok(ConvGrads {
        input: Tensor::from_vec([g.batch, g.in_c, g.in_h, g.in_w], din)?,
        weight: Tensor::from_vec(weight.shape(), dw)?,
        bias,
    })
}

/// Parametric ReLU with one slope per channel.
pub fn prelu<T: Scalar>(input: &Tensor<T>, slopes: &[T]) -> Result<Tensor<T>> {
    ensure_arg!(
        slopes.len() == input.c(),
        "prelu has {} slopes for {} channels",
        slopes.len(),
        input.c()
    );
    let mut out = input.clone();
    let hw = input.h() * input.w();
    for (i, chunk) in out.data_mut().chunks_exact_mut(hw).enumerate() {
        let a = slopes[i % slopes.len()];
        for v in chunk {
            if *v < T::zero() {
                *v = *v * a;
            }
        }
    }
    Ok(out)
}

/// Returns `(d_input, d_slopes)`.
pub fn prelu_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    slopes: &[T],
) -> (Tensor<T>, Vec<T>) {
    let hw = input.h() * input.w();
    let c = slopes.len();
    let mut din = grad_out.clone();
    let mut dslope = vec![T::zero(); c];
    for (i, (dchunk, xchunk)) in din
        .data_mut()
        .chunks_exact_mut(hw)
        .zip(input.data().chunks_exact(hw))
        .enumerate()
    {
        let ch = i % c;
        let a = slopes[ch];
        let mut acc = T::zero();
        for (d, &x) in dchunk.iter_mut().zip(xchunk) {
            if x < T::zero() {
                acc = acc + *d * x;
                *d = *d * a;
            }
        }
        dslope[ch] = dslope[ch] + acc;
    }
    (din, dslope)
}

/// Two-way softmax, numerically stable. Returns `(p0, p1)`.
#[inline]
pub fn softmax2<T: Scalar>(z0: T, z1: T) -> (T, T) {
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    let s = e0 + e1;
    (e0 / s, e1 / s)
}
