//! Images, bilinear resampling and the coarse pyramid schedule.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{ensure_arg, Error, Result};
use crate::geometry::{anchor_size, AnchorConfig, BBox};
use crate::nn::Tensor;

/// Value of out-of-image pixels in crops: raw 0 after normalization.
pub const PAD_VALUE: f32 = -1.0;

/// Planar `(channels, height, width)` image with pixels normalized to
/// `[-1, 1]` as `raw / 127.5 - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn normalize(raw: u8) -> f32 {
    raw as f32 / 127.5 - 1.0
}

pub fn denormalize(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        ensure_arg!(width >= 1 && height >= 1, "image dimensions must be positive");
        ensure_arg!(channels == 1 || channels == 3, "channels must be 1 or 3");
        ensure_arg!(
            data.len() == width * height * channels,
            "pixel buffer has {} values for {width}x{height}x{channels}",
            data.len()
        );
        ensure_arg!(data.iter().all(|v| v.is_finite()), "non-finite pixel values");
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// From interleaved 8-bit samples.
    pub fn from_raw(width: usize, height: usize, channels: usize, raw: &[u8]) -> Result<Self> {
        ensure_arg!(
            raw.len() == width * height * channels,
            "raw buffer size mismatch"
        );
        let plane = width * height;
        let mut data = vec![0.0; raw.len()];
        for (i, &v) in raw.iter().enumerate() {
            let (p, c) = (i / channels, i % channels);
            data[c * plane + p] = normalize(v);
        }
        Self::new(width, height, channels, data)
    }

    /// Interleaved 8-bit samples.
    pub fn to_raw(&self) -> Vec<u8> {
        let plane = self.width * self.height;
        let mut raw = vec![0u8; self.data.len()];
        for (i, r) in raw.iter_mut().enumerate() {
            let (p, c) = (i / self.channels, i % self.channels);
            *r = denormalize(self.data[c * plane + p]);
        }
        raw
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Channel mean; identity for single-channel images.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.width * self.height;
        let data = (0..n)
            .map(|i| (self.data[i] + self.data[n + i] + self.data[2 * n + i]) / 3.0)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&self.data);
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    pub fn with_channels(&self, channels: usize) -> Result<Image> {
        match channels {
            1 => Ok(self.to_gray()),
            3 => Ok(self.to_rgb()),
            c => Err(Error::invalid(format!("unsupported channel count {c}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            [1, self.channels, self.height, self.width],
            self.data.clone(),
        )
        .expect("image buffer matches its dimensions")
    }

    /// Reads binary PGM (`P5`) or PPM (`P6`) with maxval 255.
    pub fn read_pnm(r: impl Read) -> Result<Image> {
        let mut r = BufReader::new(r);
        let bad = |d: &str| Error::format("PNM image", d.to_string());
        let mut header = Vec::new();
        while header.len() < 4 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated header"));
            }
            let line = line.split('#').next().unwrap_or("");
            header.extend(line.split_whitespace().map(str::to_string));
        }
        let channels = match header[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            m => return Err(bad(&format!("unsupported magic {m}"))),
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (w, h, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        let mut raw = vec![0u8; w * h * channels];
        r.read_exact(&mut raw).map_err(|_| bad("truncated pixel data"))?;
        Image::from_raw(w, h, channels, &raw)
    }

    /// Writes `P6` (grayscale is replicated to RGB).
    pub fn write_ppm(&self, mut w: impl Write) -> Result<()> {
        let rgb = self.to_rgb();
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&rgb.to_raw())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        Image::read_pnm(std::fs::File::open(path)?)
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_ppm(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

fn scaled_dim(dim: usize, factor: f64) -> usize {
    ((dim as f64 * factor + 0.5).floor() as usize).max(1)
}

/// Surrounds the image with `pad` pixels of `value` on every side.
pub fn pad_image(img: &Image, pad: usize, value: f32) -> Image {
    if pad == 0 {
        return img.clone();
    }
    let (w, h) = (img.width + 2 * pad, img.height + 2 * pad);
    let mut out = Image::filled(w, h, img.channels, value);
    for c in 0..img.channels {
        for y in 0..img.height {
            let src = &img.plane(c)[y * img.width..(y + 1) * img.width];
            let start = (c * h + y + pad) * w + pad;
            out.data[start..start + img.width].copy_from_slice(src);
        }
    }
    out
}

/// Bilinear resize with half-pixel-centre alignment and edge clamping.
/// Output dimensions are `round(dim · factor)`, at least 1.
pub fn resize_bilinear(img: &Image, factor: f64) -> Result<Image> {
    ensure_arg!(
        factor > 0.0 && factor.is_finite(),
        "resize factor must be positive, got {factor}"
    );
    let (ow, oh) = (scaled_dim(img.width, factor), scaled_dim(img.height, factor));
    resize_to(img, ow, oh)
}

/// Source sample positions for one axis: `(lo, hi, frac)` per output pixel.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f32)> {
    let ratio = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, (s - lo as f64) as f32)
        })
        .collect()
}

pub fn resize_to(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    ensure_arg!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let xs = axis_taps(img.width, out_w);
    let ys = axis_taps(img.height, out_h);
    let mut data = vec![0.0; out_w * out_h * img.channels];
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = &mut data[c * out_w * out_h..(c + 1) * out_w * out_h];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            let r0 = &src[y0 * img.width..(y0 + 1) * img.width];
            let r1 = &src[y1 * img.width..(y1 + 1) * img.width];
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                dst[oy * out_w + ox] = top + (bot - top) * fy;
            }
        }
    }
    Image::new(out_w, out_h, img.channels, data)
}

/// Samples `window` (original-image coordinates) onto an `out x out` grid
/// with bilinear interpolation. Pixels outside the image read as
/// [`PAD_VALUE`]. Returns planar `(channels, out, out)` values.
pub fn crop_resize(img: &Image, window: &BBox, out: usize) -> Vec<f32> {
    let mut dst = vec![PAD_VALUE; img.channels * out * out];
    crop_resize_into(img, window, out, &mut dst);
    dst
}

pub fn crop_resize_into(img: &Image, window: &BBox, out: usize, dst: &mut [f32]) {
    let sx = window.width() / out as f64;
    let sy = window.height() / out as f64;
    let (w, h) = (img.width as isize, img.height as isize);
    let taps = |start: f64, step: f64| -> Vec<(isize, f32)> {
        (0..out)
            .map(|o| {
                let s = start + (o as f64 + 0.5) * step - 0.5;
                let lo = s.floor();
                (lo as isize, (s - lo) as f32)
            })
            .collect()
    };
    let xt = taps(window.x1, sx);
    let yt = taps(window.y1, sy);
    for c in 0..img.channels {
        let plane = img.plane(c);
        let px = |x: isize, y: isize| -> f32 {
            if x < 0 || y < 0 || x >= w || y >= h {
                PAD_VALUE
            } else {
                plane[y as usize * img.width + x as usize]
            }
        };
        for (oy, &(y0, fy)) in yt.iter().enumerate() {
            for (ox, &(x0, fx)) in xt.iter().enumerate() {
                let top = px(x0, y0) + (px(x0 + 1, y0) - px(x0, y0)) * fx;
                let bot = px(x0, y0 + 1) + (px(x0 + 1, y0 + 1) - px(x0, y0 + 1)) * fx;
                dst[(c * out + oy) * out + ox] = top + (bot - top) * fy;
            }
        }
    }
}

/// One level of the pyramid actually evaluated by the proposal network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slice {
    pub index: usize,
    /// Nominal resize factor.
    pub scale: f64,
    pub width: usize,
    pub height: usize,
    /// Realized factors after rounding the slice dimensions.
    pub scale_x: f64,
    pub scale_y: f64,
    /// Position on the dense lattice `first · α^m`.
    pub lattice: usize,
}

impl Slice {
    pub fn to_original(&self, b: &BBox) -> BBox {
        b.scale(1.0 / self.scale_x, 1.0 / self.scale_y)
    }
    pub fn to_slice(&self, b: &BBox) -> BBox {
        b.scale(self.scale_x, self.scale_y)
    }
}

/// Resize factors of a coarse pyramid: consecutive slices are `α^n_A`
/// apart, so each slice's anchors cover `n_A` steps of the dense pyramid.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidSchedule {
    pub alpha: f64,
    pub coarse_step: f64,
    /// Per-slice resize factors, largest first.
    pub scales: Vec<f64>,
    pub min_face: f64,
    pub max_face: f64,
    pub window: f64,
    pub anchors: usize,
    pub image_width: usize,
    pub image_height: usize,
    first_scale: f64,
}

/// Builds the coarse schedule. The first factor maps a `min_face` face onto
/// the smallest anchor. Slices continue while the shorter side is at least
/// one window and the smallest face a slice covers does not exceed
/// `max_face`. An image too small for any slice yields an empty schedule.
pub fn build_schedule(
    image_width: usize,
    image_height: usize,
    cfg: &AnchorConfig,
    min_face: f64,
    max_face: f64,
) -> Result<PyramidSchedule> {
    cfg.validate()?;
    ensure_arg!(min_face >= 1.0, "minimum face size must be >= 1, got {min_face}");
    ensure_arg!(
        min_face <= max_face,
        "minimum face {min_face} exceeds maximum face {max_face}"
    );
    let smallest = anchor_size(cfg, cfg.anchors)?;
    let first_scale = smallest / min_face;
    let mut sched = PyramidSchedule {
        alpha: cfg.alpha,
        coarse_step: cfg.alpha.powi(cfg.anchors as i32),
        scales: Vec::new(),
        min_face,
        max_face,
        window: cfg.window,
        anchors: cfg.anchors,
        image_width,
        image_height,
        first_scale,
    };
    sched.scales = sched
        .lattice_until_exhausted(|m| m % cfg.anchors == 0)
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    Ok(sched)
}

impl PyramidSchedule {
    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    fn fits(&self, scale: f64) -> bool {
        let w = scaled_dim(self.image_width, scale);
        let h = scaled_dim(self.image_height, scale);
        let smallest = self.window * self.alpha.powi(self.anchors as i32 - 1);
        w.min(h) as f64 >= self.window && smallest * self.alpha.sqrt() / scale <= self.max_face
    }

    fn lattice_until_exhausted(&self, keep: impl Fn(usize) -> bool) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for m in 0.. {
            let s = self.first_scale * self.alpha.powi(m as i32);
            if !self.fits(s) {
                break;
            }
            if keep(m) {
                out.push((m, s));
            }
        }
        out
    }

    fn make_slice(&self, index: usize, lattice: usize, scale: f64) -> Slice {
        let width = scaled_dim(self.image_width, scale);
        let height = scaled_dim(self.image_height, scale);
        Slice {
            index,
            scale,
            width,
            height,
            scale_x: width as f64 / self.image_width as f64,
            scale_y: height as f64 / self.image_height as f64,
            lattice,
        }
    }

    /// The coarse slices.
    pub fn slices(&self) -> Vec<Slice> {
        self.scales
            .iter()
            .enumerate()
            .map(|(j, &s)| self.make_slice(j, j * self.anchors, s))
            .collect()
    }

    /// Slices for `templates` context templates per face scale: every
    /// lattice position `m` with `m mod n_A < templates`. Each face scale is
    /// then seen through exactly `templates` (slice, anchor) pairs, one per
    /// template; with one template this is the coarse schedule.
    pub fn context_slices(&self, templates: usize) -> Vec<Slice> {
        let templates = templates.clamp(1, self.anchors);
        self.lattice_until_exhausted(|m| m % self.anchors < templates)
            .into_iter()
            .enumerate()
            .map(|(i, (m, s))| self.make_slice(i, m, s))
            .collect()
    }

    /// Total pixel count over the coarse slices.
    pub fn pixel_count(&self) -> usize {
        self.slices().iter().map(|s| s.width * s.height).sum()
    }
}

/// Maps a box from slice coordinates back to the original image.
pub fn map_to_original(slice_scale: f64, b: &BBox) -> BBox {
    b.scale(1.0 / slice_scale, 1.0 / slice_scale)
}

pub fn map_to_slice(slice_scale: f64, b: &BBox) -> BBox {
    b.scale(slice_scale, slice_scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: usize, h: usize) -> Image {
        let data = (0..w * h).map(|i| ((i % 17) as f32 / 8.0) - 1.0).collect();
        Image::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn unit_factor_is_identity() {
        let img = gradient_image(13, 9);
        assert_eq!(resize_bilinear(&img, 1.0).unwrap(), img);
    }

    #[test]
    fn constants_stay_constant() {
        let img = Image::filled(31, 17, 3, 0.25);
        for f in [0.13, 0.5, 0.7937, 1.7, 3.0] {
            let r = resize_bilinear(&img, f).unwrap();
            assert!(r.data.iter().all(|&v| (v - 0.25).abs() < 1e-6), "factor {f}");
        }
    }

    #[test]
    fn checkerboard_upscale_by_hand() {
        let img = Image::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let r = resize_bilinear(&img, 2.0).unwrap();
        assert_eq!((r.width, r.height), (4, 4));
        // source coordinates per output index: clamp(-0.25)=0, 0.25, 0.75, clamp(1.25)=1
        #[rustfmt::skip]
        let expect = [
            0.0,  0.25,  0.75,  1.0,
            0.25, 0.375, 0.625, 0.75,
            0.75, 0.625, 0.375, 0.25,
            1.0,  0.75,  0.25,  0.0,
        ];
        for (got, want) in r.data.iter().zip(expect) {
            assert!((got - want).abs() < 1e-6, "{:?}", r.data);
        }
    }

    #[test]
    fn output_dims_round_half_up() {
        let img = gradient_image(10, 3);
        let r = resize_bilinear(&img, 0.25).unwrap();
        assert_eq!((r.width, r.height), (3, 1));
        let r = resize_bilinear(&img, 0.05).unwrap();
        assert_eq!((r.width, r.height), (1, 1));
        assert!(resize_bilinear(&img, 0.0).is_err());
        assert!(resize_bilinear(&img, -1.0).is_err());
    }

    #[test]
    fn crop_matches_resize_inside_image() {
        let img = gradient_image(40, 40);
        let crop = crop_resize(&img, &BBox::new(0.0, 0.0, 40.0, 40.0), 20);
        let r = resize_bilinear(&img, 0.5).unwrap();
        for (a, b) in crop.iter().zip(&r.data) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn crop_pads_outside() {
        let img = Image::filled(10, 10, 1, 0.5);
        let crop = crop_resize(&img, &BBox::new(-20.0, -20.0, -10.0, -10.0), 4);
        assert!(crop.iter().all(|&v| v == PAD_VALUE));
        let corner = crop_resize(&img, &BBox::new(-5.0, -5.0, 5.0, 5.0), 10);
        assert_eq!(corner[0], PAD_VALUE);
        assert_eq!(corner[99], 0.5);
    }

    #[test]
    fn pnm_round_trip() {
        let raw: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 7) as u8).collect();
        let img = Image::from_raw(4, 3, 3, &raw).unwrap();
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        let back = Image::read_pnm(&buf[..]).unwrap();
        assert_eq!(back, img);
        assert_eq!(back.to_raw(), raw);
        let gray = Image::read_pnm(&b"P5\n# c\n2 1\n255\n\x00\xff"[..]).unwrap();
        assert_eq!(gray.data, vec![-1.0, 1.0]);
        assert!(Image::read_pnm(&b"P3\n1 1\n255\n0 0 0"[..]).is_err());
        assert!(Image::read_pnm(&b"P6\n2 2\n255\n\x00"[..]).is_err());
    }

    #[test]
    fn first_scale_and_step() {
        let cfg = AnchorConfig::default();
        let smallest = anchor_size(&cfg, 4).unwrap();
        let s = build_schedule(640, 480, &cfg, smallest, 480.0).unwrap();
        assert!((s.scales[0] - 1.0).abs() < 1e-12);
        assert!((s.coarse_step - 0.39685).abs() < 1e-4);

        let s = build_schedule(640, 480, &cfg, 16.0, 480.0).unwrap();
        let expect = [0.75, 0.2976, 0.1181];
        for (got, want) in s.scales.iter().zip(expect) {
            assert!((got - want).abs() < 5e-4, "{:?}", s.scales);
        }
        for w in s.scales.windows(2) {
            assert!((w[1] / w[0] - s.coarse_step).abs() < 1e-9);
        }
    }

    #[test]
    fn small_image_gives_empty_schedule() {
        let s = build_schedule(20, 30, &AnchorConfig::default(), 12.0, 30.0).unwrap();
        assert!(s.is_empty());
        assert!(build_schedule(100, 100, &AnchorConfig::default(), 20.0, 10.0).is_err());
        assert!(build_schedule(100, 100, &AnchorConfig::default(), 0.5, 10.0).is_err());
    }

    #[test]
    fn context_slices_with_one_template_are_coarse() {
        let cfg = AnchorConfig::default();
        let s = build_schedule(320, 240, &cfg, 12.0, 240.0).unwrap();
        assert_eq!(s.context_slices(1), s.slices());
        let two = s.context_slices(2);
        assert!(two.len() > s.slices().len());
        assert!(two.iter().all(|sl| sl.lattice % 4 < 2));
    }

    #[test]
    fn padding_surrounds_image() {
        let img = gradient_image(3, 2);
        let p = pad_image(&img, 2, PAD_VALUE);
        assert_eq!((p.width, p.height), (7, 6));
        assert_eq!(p.get(0, 0, 0), PAD_VALUE);
        assert_eq!(p.get(0, 2, 2), img.get(0, 0, 0));
        assert_eq!(p.get(0, 3, 4), img.get(0, 1, 2));
        assert_eq!(p.get(0, 5, 6), PAD_VALUE);
        assert_eq!(pad_image(&img, 0, 0.0), img);
    }

    #[test]
    fn box_mapping() {
        let b = BBox::new(10.0, 10.0, 22.0, 22.0);
        assert_eq!(map_to_original(1.0, &b), b);
        assert_eq!(map_to_original(0.5, &b), BBox::new(20.0, 20.0, 44.0, 44.0));
        let back = map_to_original(0.37, &map_to_slice(0.37, &b));
        assert!((back.x1 - b.x1).abs() < 1e-9 && (back.y2 - b.y2).abs() < 1e-9);
    }
}
