//! Raster cleanup of a detected table region ahead of OCR: crop and pad,
//! Otsu binarization, quarter-turn orientation fixes and ruling-line removal
//! with rectangular structuring elements.
//!
//! Binary images use the [`INK`]/[`PAPER`] convention: ink (0) is the
//! foreground for every morphological operator, and pixels outside the image
//! count as background.

use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::raster::{GrayImage, INK, PAPER};

pub const DEFAULT_PAD: u32 = 10;
/// Long side of the line-detection kernels.
pub const LINE_KERNEL_LEN: u32 = 50;

/// All-ones rectangle; anchored at `(rows / 2, cols / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    rows: u32,
    cols: u32,
}

impl StructuringElement {
    pub fn new(rows: u32, cols: u32) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!("structuring element {rows}x{cols} is empty")));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    /// `len` wide, `thickness` tall.
    pub fn horizontal(len: u32, thickness: u32) -> Self {
        Self::new(thickness, len).expect("positive kernel")
    }

    /// `thickness` wide, `len` tall.
    pub fn vertical(len: u32, thickness: u32) -> Self {
        Self::new(len, thickness).expect("positive kernel")
    }
}

pub fn crop_pad(img: &GrayImage, roi: BBox, pad: u32) -> Result<GrayImage> {
    if roi.right() > img.width() || roi.bottom() > img.height() {
        return Err(Error::BoxOutOfGrid(roi, img.width(), img.height()));
    }
    let mut out = GrayImage::new(roi.width + 2 * pad, roi.height + 2 * pad, PAPER);
    for y in 0..roi.height {
        for x in 0..roi.width {
            out.set(x + pad, y + pad, img.get(roi.left + x, roi.top + y));
        }
    }
    Ok(out)
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    hist
}

/// Otsu cut over a 256-bin histogram. Class 0 is `intensity <= t`. Scores are
/// compared exactly as rationals, ties going to the smaller `t`.
pub fn otsu_from_histogram(hist: &[u64; 256]) -> Result<u8> {
    let n: u64 = hist.iter().sum();
    let total: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();
    let mut best: Option<(u8, u128, u128)> = None;
    let (mut n0, mut s0) = (0u64, 0u128);
    for t in 0..255usize {
        n0 += hist[t];
        s0 += t as u128 * hist[t] as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let (num, den) = between_class_ratio(n, n0, s0, total);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => wide_mul(num, bd) > wide_mul(bn, den),
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|b| b.0).ok_or(Error::DegenerateHistogram)
}

/// Between-class variance times `N^2`, as `(numerator, denominator)`:
/// `(N*S0 - n0*S)^2 / (n0 * n1)`.
pub(crate) fn between_class_ratio(n: u64, n0: u64, s0: u128, total: u128) -> (u128, u128) {
    let a = n as u128 * s0;
    let b = n0 as u128 * total;
    let d = a.abs_diff(b);
    (d * d, n0 as u128 * (n - n0) as u128)
}

/// Full 256-bit product as `(hi, lo)`; tuple ordering compares correctly.
pub(crate) fn wide_mul(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);
    let ll = a_lo * b_lo;
    let lh = a_lo * b_hi;
    let hl = a_hi * b_lo;
    let hh = a_hi * b_hi;
    let mid = (ll >> 64) + (lh & MASK) + (hl & MASK);
    let lo = (ll & MASK) | (mid << 64);
    let hi = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
    (hi, lo)
}

/// Returns the cut and the binarized image (`<= t` becomes ink).
pub fn otsu_threshold(img: &GrayImage) -> Result<(u8, GrayImage)> {
    let t = otsu_from_histogram(&histogram(img))?;
    Ok((t, binarize(img, t)))
}

pub fn binarize(img: &GrayImage, t: u8) -> GrayImage {
    let px = img.pixels().iter().map(|&p| if p <= t { INK } else { PAPER }).collect();
    GrayImage::from_vec(img.width(), img.height(), px).expect("same dimensions")
}

/// Quarter-turn orientation fix. 90 rotates clockwise, 270 counter-clockwise.
/// 0 and 180 return the input unchanged: a reported 180 is treated as a
/// detector error since tables are never fully flipped.
pub fn rotate_quarter(img: &GrayImage, angle: i32) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    match angle {
        0 | 180 => Ok(img.clone()),
        90 => {
            let mut out = GrayImage::new(h, w, PAPER);
            for y in 0..w {
                for x in 0..h {
                    out.set(x, y, img.get(y, h - 1 - x));
                }
            }
            Ok(out)
        }
        270 => {
            let mut out = GrayImage::new(h, w, PAPER);
            for y in 0..w {
                for x in 0..h {
                    out.set(x, y, img.get(w - 1 - y, x));
                }
            }
            Ok(out)
        }
        other => Err(Error::BadAngle(other)),
    }
}

fn foreground(img: &GrayImage) -> Vec<bool> {
    img.pixels().iter().map(|&p| p == INK).collect()
}

fn from_foreground(w: u32, h: u32, fg: &[bool]) -> GrayImage {
    let px = fg.iter().map(|&f| if f { INK } else { PAPER }).collect();
    GrayImage::from_vec(w, h, px).expect("same dimensions")
}

// One-dimensional pass along rows (`stride == 1`) or columns. With `erode`,
// an output pixel survives iff the whole window lies inside the line and is
// foreground; otherwise it is set iff any in-bounds window pixel is.
fn pass_1d(src: &[bool], len: usize, count: usize, stride: usize, step: usize, k: usize, erode: bool) -> Vec<bool> {
    let anchor = (k / 2) as isize;
    let mut out = vec![false; src.len()];
    let mut prefix = vec![0u32; len + 1];
    for line in 0..count {
        let base = line * step;
        for i in 0..len {
            prefix[i + 1] = prefix[i] + src[base + i * stride] as u32;
        }
        for i in 0..len {
            let (lo, hi) = if erode {
                (i as isize - anchor, i as isize - anchor + k as isize)
            } else {
                (i as isize + anchor - k as isize + 1, i as isize + anchor + 1)
            };
            let v = if erode {
                lo >= 0 && hi <= len as isize && prefix[hi as usize] - prefix[lo as usize] == k as u32
            } else {
                let (lo, hi) = (lo.max(0) as usize, hi.min(len as isize) as usize);
                lo < hi && prefix[hi] > prefix[lo]
            };
            out[base + i * stride] = v;
        }
    }
    out
}

fn morph(img: &GrayImage, k: StructuringElement, erode: bool) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let fg = foreground(img);
    let rows_done = pass_1d(&fg, w, h, 1, w, k.cols as usize, erode);
    let both = pass_1d(&rows_done, h, w, w, 1, k.rows as usize, erode);
    from_foreground(img.width(), img.height(), &both)
}

pub fn morph_erode(img: &GrayImage, k: StructuringElement) -> GrayImage {
    morph(img, k, true)
}

pub fn morph_dilate(img: &GrayImage, k: StructuringElement) -> GrayImage {
    morph(img, k, false)
}

pub fn morph_open(img: &GrayImage, k: StructuringElement) -> GrayImage {
    morph_dilate(&morph_erode(img, k), k)
}

fn union_into(acc: &mut GrayImage, other: &GrayImage) {
    for (a, &b) in acc.pixels_mut().iter_mut().zip(other.pixels()) {
        if b == INK {
            *a = INK;
        }
    }
}

/// 3x3 box mean of the foreground indicator; keeps pixels whose mean is at
/// least 1/9.
pub fn blur_rebinarize(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut out = GrayImage::new(img.width(), img.height(), PAPER);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0u32;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h && img.get(nx as u32, ny as u32) == INK {
                        sum += 1;
                    }
                }
            }
            if sum as f64 / 9.0 >= 1.0 / 9.0 {
                out.set(x as u32, y as u32, INK);
            }
        }
    }
    out
}

/// Kernels used for line detection: `50 x i` horizontal then `i x 50`
/// vertical, `i` in {1, 2}.
pub fn line_kernels() -> [StructuringElement; 4] {
    [
        StructuringElement::horizontal(LINE_KERNEL_LEN, 1),
        StructuringElement::horizontal(LINE_KERNEL_LEN, 2),
        StructuringElement::vertical(LINE_KERNEL_LEN, 1),
        StructuringElement::vertical(LINE_KERNEL_LEN, 2),
    ]
}

/// Ink marks long horizontal and vertical strokes: union of the openings with
/// every line kernel, dilated 3x3, then blurred and re-binarized.
pub fn build_line_mask(binary: &GrayImage) -> GrayImage {
    let mut acc = GrayImage::new(binary.width(), binary.height(), PAPER);
    for k in line_kernels() {
        union_into(&mut acc, &morph_open(binary, k));
    }
    let dilated = morph_dilate(&acc, StructuringElement::new(3, 3).expect("3x3"));
    blur_rebinarize(&dilated)
}

/// Whitens every pixel where `mask` holds ink.
pub fn remove_lines(img: &GrayImage, mask: &GrayImage) -> Result<GrayImage> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let mut out = img.clone();
    for (p, &m) in out.pixels_mut().iter_mut().zip(mask.pixels()) {
        if m == INK {
            *p = PAPER;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PrepOptions {
    pub pad: u32,
    pub angle: i32,
    pub remove_lines: bool,
}

impl Default for PrepOptions {
    fn default() -> Self {
        Self { pad: DEFAULT_PAD, angle: 0, remove_lines: true }
    }
}

#[derive(Debug, Clone)]
pub struct PrepOutput {
    /// Cleaned grayscale region, ready for OCR.
    pub image: GrayImage,
    pub otsu: u8,
    pub line_mask: Option<GrayImage>,
}

/// crop/pad, rotate, Otsu, then line removal on the grayscale crop.
pub fn prepare_region(img: &GrayImage, roi: BBox, opts: &PrepOptions) -> Result<PrepOutput> {
    let cropped = rotate_quarter(&crop_pad(img, roi, opts.pad)?, opts.angle)?;
    let (otsu, binary) = otsu_threshold(&cropped)?;
    if !opts.remove_lines {
        return Ok(PrepOutput { image: cropped, otsu, line_mask: None });
    }
    let mask = build_line_mask(&binary);
    let image = remove_lines(&cropped, &mask)?;
    Ok(PrepOutput { image, otsu, line_mask: Some(mask) })
}
