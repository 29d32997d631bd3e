//! Plain-text annotation and detection files, FDDB ellipses and box
//! drawing.
//!
//! Both text formats are a sequence of records: a line with the image path
//! and a count `n`, then `n` lines of `x1 y1 x2 y2` (annotations) or
//! `x1 y1 x2 y2 score` (detections, 4 decimals). Paths may contain spaces;
//! the count is the last field of the header line. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::Detection;
use crate::geometry::BBox;
use crate::pyramid::Image;

#[derive(Clone, Debug, PartialEq)]
pub struct Record<T> {
    pub path: String,
    pub items: Vec<T>,
}

fn parse_records<T>(
    text: &str,
    what: &'static str,
    fields: usize,
    make: impl Fn(&[f64]) -> Result<T>,
) -> Result<Vec<Record<T>>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        let (path, count) = header
            .rsplit_once(char::is_whitespace)
            .ok_or_else(|| Error::format(what, format!("line {ln}: expected `path count`")))?;
        let n: usize = count
            .parse()
            .map_err(|_| Error::format(what, format!("line {ln}: bad count {count:?}")))?;
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::format(what, format!("{path}: expected {n} entries")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(what, format!("line {ln}: non-numeric field")))?;
            if vals.len() != fields {
                return Err(Error::format(
                    what,
                    format!("line {ln}: expected {fields} fields, got {}", vals.len()),
                ));
            }
            items.push(make(&vals).map_err(|e| Error::format(what, format!("line {ln}: {e}")))?);
        }
        out.push(Record {
            path: path.trim().to_string(),
            items,
        });
    }
    Ok(out)
}

fn checked_box(v: &[f64]) -> Result<BBox> {
    let b = BBox::new(v[0], v[1], v[2], v[3]);
    if b.is_valid() {
        Ok(b)
    } else {
        Err(Error::invalid(format!("degenerate box {v:?}")))
    }
}

pub fn parse_annotations(text: &str) -> Result<Vec<Record<BBox>>> {
    parse_records(text, "annotation file", 4, checked_box)
}

pub fn parse_detections(text: &str) -> Result<Vec<Record<Detection>>> {
    parse_records(text, "detection file", 5, |v| {
        Ok(Detection {
            bbox: checked_box(v)?,
            score: v[4],
        })
    })
}

pub fn format_annotations(records: &[Record<BBox>]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(s, "{} {}", r.path, r.items.len());
        for b in &r.items {
            let _ = writeln!(s, "{:.4} {:.4} {:.4} {:.4}", b.x1, b.y1, b.x2, b.y2);
        }
    }
    s
}

pub fn format_detections(records: &[Record<Detection>]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(s, "{} {}", r.path, r.items.len());
        for d in &r.items {
            let b = d.bbox;
            let _ = writeln!(s, "{:.4} {:.4} {:.4} {:.4} {:.4}", b.x1, b.y1, b.x2, b.y2, d.score);
        }
    }
    s
}

/// FDDB ground truth: a rotated ellipse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseAnnotation {
    pub major_radius: f64,
    pub minor_radius: f64,
    /// Radians; the major axis is vertical at angle 0.
    pub angle: f64,
    pub center_x: f64,
    pub center_y: f64,
}

/// Axis-aligned bounding box of the ellipse. With the major axis at angle
/// `θ` from the vertical, the half-extents are
/// `ex = √(a²sin²θ + b²cos²θ)` and `ey = √(a²cos²θ + b²sin²θ)`.
pub fn ellipse_to_box(e: &EllipseAnnotation) -> BBox {
    let (a, b) = (e.major_radius, e.minor_radius);
    let (s, c) = e.angle.sin_cos();
    let ex = (a * a * s * s + b * b * c * c).sqrt();
    let ey = (a * a * c * c + b * b * s * s).sqrt();
    BBox::new(e.center_x - ex, e.center_y - ey, e.center_x + ex, e.center_y + ey)
}

/// Parses FDDB `*-ellipseList.txt` content: a path line, a count line, then
/// `major minor angle cx cy 1` per face. Returns boxes via
/// [`ellipse_to_box`].
pub fn parse_fddb_ellipses(text: &str) -> Result<Vec<Record<BBox>>> {
    let what = "FDDB ellipse list";
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut out = Vec::new();
    while let Some((_, path)) = lines.next() {
        let (ln, count) = lines
            .next()
            .ok_or_else(|| Error::format(what, format!("{path}: missing face count")))?;
        let n: usize = count
            .parse()
            .map_err(|_| Error::format(what, format!("line {ln}: bad count {count:?}")))?;
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::format(what, format!("{path}: expected {n} ellipses")))?;
            let v: Vec<f64> = line
                .split_whitespace()
                .take(5)
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(what, format!("line {ln}: non-numeric field")))?;
            if v.len() < 5 || v[0] <= 0.0 || v[1] <= 0.0 {
                return Err(Error::format(what, format!("line {ln}: invalid ellipse")));
            }
            items.push(ellipse_to_box(&EllipseAnnotation {
                major_radius: v[0],
                minor_radius: v[1],
                angle: v[2],
                center_x: v[3],
                center_y: v[4],
            }));
        }
        out.push(Record {
            path: path.to_string(),
            items,
        });
    }
    Ok(out)
}

/// Integer pixel rectangle `[x1, x2) x [y1, y2)` covered by a box outline.
pub fn pixel_rect(b: &BBox) -> (i64, i64, i64, i64) {
    (
        b.x1.round() as i64,
        b.y1.round() as i64,
        b.x2.round() as i64,
        b.y2.round() as i64,
    )
}

/// RGB copy of `img` with a 1-pixel pure red outline for every box, drawn
/// on the border pixels of [`pixel_rect`] and clipped to the image.
pub fn draw_boxes(img: &Image, boxes: &[BBox]) -> Image {
    let mut out = img.to_rgb();
    let (w, h) = (out.width as i64, out.height as i64);
    let mut put = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && x < w && y < h {
            let (x, y) = (x as usize, y as usize);
            out.set(0, y, x, 1.0);
            out.set(1, y, x, -1.0);
            out.set(2, y, x, -1.0);
        }
    };
    for b in boxes {
        let (x1, y1, x2, y2) = pixel_rect(b);
        if x2 <= x1 || y2 <= y1 {
            continue;
        }
        for x in x1..x2 {
            put(x, y1);
            put(x, y2 - 1);
        }
        for y in y1..y2 {
            put(x1, y);
            put(x2 - 1, y);
        }
    }
    out
}
