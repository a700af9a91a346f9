//! Table detection post-processing: probability masks to table boxes, the
//! three-class separator labels used for training, and detection scoring.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geom::{box_iou, BBox};
use crate::raster::GrayImage;

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_MIN_AREA_FRAC: f64 = 0.01;
pub const DEFAULT_SEPARATOR_BAND: u32 = 5;
pub const DEFAULT_MATCH_IOU: f64 = 0.5;

/// Per-pixel table probability, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ProbMask {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::LengthMismatch {
                expected: width as usize * height as usize,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: u32, height: u32, p: f64) -> Self {
        Self::new(width, height, vec![p; width as usize * height as usize]).expect("valid fill")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, p: f64) {
        assert!((0.0..=1.0).contains(&p));
        self.values[y as usize * self.width as usize + x as usize] = p;
    }

    /// Byte `v` encodes probability `v / 255`.
    pub fn from_gray(img: &GrayImage) -> Self {
        let values = img.pixels().iter().map(|&v| v as f64 / 255.0).collect();
        Self { width: img.width(), height: img.height(), values }
    }

    pub fn to_gray(&self) -> GrayImage {
        let px = self.values.iter().map(|p| (p * 255.0).round() as u8).collect();
        GrayImage::from_vec(self.width, self.height, px).expect("same dimensions")
    }

    /// Quantizes to 8 bits and back, which is what a PGM round trip does.
    pub fn quantized(&self) -> Self {
        Self::from_gray(&self.to_gray())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolMask {
    pub width: u32,
    pub height: u32,
    pub values: Vec<bool>,
}

impl BoolMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, values: vec![false; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.values[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

/// One 8-connected component. Pixels are stored in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    pub width: u32,
    pub height: u32,
    pub label: usize,
    pub pixels: Vec<(u32, u32)>,
}

impl RegionMask {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PixelClass {
    Other = 0,
    Table = 1,
    Separator = 2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassGrid {
    pub width: u32,
    pub height: u32,
    pub values: Vec<PixelClass>,
}

impl ClassGrid {
    pub fn get(&self, x: u32, y: u32) -> PixelClass {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self, class: PixelClass) -> usize {
        self.values.iter().filter(|&&c| c == class).count()
    }

    /// OTHER, SEPARATOR and TABLE map to 0, 128 and 255.
    pub fn to_gray(&self) -> GrayImage {
        let px = self
            .values
            .iter()
            .map(|c| match c {
                PixelClass::Other => 0,
                PixelClass::Separator => 128,
                PixelClass::Table => 255,
            })
            .collect();
        GrayImage::from_vec(self.width, self.height, px).expect("same dimensions")
    }

    pub fn from_gray(img: &GrayImage) -> Result<Self> {
        let values = img
            .pixels()
            .iter()
            .map(|&v| match v {
                0 => Ok(PixelClass::Other),
                128 => Ok(PixelClass::Separator),
                255 => Ok(PixelClass::Table),
                other => Err(Error::Parse(format!("class grid byte {other} not in {{0,128,255}}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { width: img.width(), height: img.height(), values })
    }
}

pub fn threshold_mask(mask: &ProbMask, t: f64) -> BoolMask {
    BoolMask {
        width: mask.width,
        height: mask.height,
        values: mask.values.iter().map(|&p| p >= t).collect(),
    }
}

/// Splits the true pixels into maximal 8-connected components, ordered by
/// their first pixel in row-major scan order.
pub fn connected_regions(mask: &BoolMask) -> Vec<RegionMask> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut seen = vec![false; mask.values.len()];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.values.len() {
        if !mask.values[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let (x, y) = ((idx as i64) % w, (idx as i64) / w);
            pixels.push((x as u32, y as u32));
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let n = (ny * w + nx) as usize;
                    if mask.values[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        regions.push(RegionMask {
            width: mask.width,
            height: mask.height,
            label: regions.len(),
            pixels,
        });
    }
    regions
}

/// Keeps regions whose pixel count is at least `min_frac * page_area`.
pub fn filter_small_regions(regions: Vec<RegionMask>, page_area: u64, min_frac: f64) -> Vec<RegionMask> {
    assert!(page_area > 0, "page area must be positive");
    let min_pixels = min_frac * page_area as f64;
    regions
        .into_iter()
        .filter(|r| r.pixel_count() as f64 >= min_pixels)
        .collect()
}

/// Minimal enclosing axis-aligned rectangle.
pub fn rectanglize(region: &RegionMask) -> Result<BBox> {
    let mut it = region.pixels.iter();
    let &(x0, y0) = it.next().ok_or(Error::EmptyRegion)?;
    let (mut l, mut t, mut r, mut b) = (x0, y0, x0, y0);
    for &(x, y) in it {
        l = l.min(x);
        r = r.max(x);
        t = t.min(y);
        b = b.max(y);
    }
    Ok(BBox::new(l, t, r - l + 1, b - t + 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskParams {
    pub threshold: f64,
    pub min_area_frac: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD, min_area_frac: DEFAULT_MIN_AREA_FRAC }
    }
}

/// threshold, components, area filter, rectangles.
pub fn mask_to_boxes(mask: &ProbMask, params: MaskParams) -> Vec<BBox> {
    let regions = connected_regions(&threshold_mask(mask, params.threshold));
    filter_small_regions(regions, mask.area(), params.min_area_frac)
        .iter()
        .map(|r| rectanglize(r).expect("components are non-empty"))
        .collect()
}

/// Pixels covered by one box become TABLE; background pixels within `band`
/// (Chebyshev distance) of two or more distinct boxes become SEPARATOR.
pub fn generate_separator_labels(boxes: &[BBox], width: u32, height: u32, band: u32) -> Result<ClassGrid> {
    if band == 0 {
        return Err(Error::InvalidArgument("separator band must be positive".into()));
    }
    let n = width as usize * height as usize;
    let mut claims = vec![0u16; n];
    let mut values = vec![PixelClass::Other; n];
    for b in boxes {
        if b.right() > width || b.bottom() > height {
            return Err(Error::BoxOutOfGrid(*b, width, height));
        }
        let x0 = b.left.saturating_sub(band);
        let y0 = b.top.saturating_sub(band);
        let x1 = (b.right() + band).min(width);
        let y1 = (b.bottom() + band).min(height);
        for y in y0..y1 {
            let row = y as usize * width as usize;
            for x in x0..x1 {
                claims[row + x as usize] += 1;
            }
        }
        for y in b.top..b.bottom() {
            let row = y as usize * width as usize;
            values[row + b.left as usize..row + b.right() as usize].fill(PixelClass::Table);
        }
    }
    for (v, &c) in values.iter_mut().zip(&claims) {
        if *v == PixelClass::Other && c >= 2 {
            *v = PixelClass::Separator;
        }
    }
    Ok(ClassGrid { width, height, values })
}

/// Greedy one-to-one matching: all overlapping pairs in descending IOU order
/// (ties by prediction index, then truth index), each box used at most once.
pub fn greedy_match(pred: &[BBox], truth: &[BBox]) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let iou = box_iou(p, t);
            if iou > 0.0 {
                pairs.push((i, j, iou));
            }
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_p = vec![false; pred.len()];
    let mut used_t = vec![false; truth.len()];
    let mut out = Vec::new();
    for (i, j, iou) in pairs {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            out.push((i, j, iou));
        }
    }
    out
}

/// Additive detection tallies so results can be pooled across pages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectionCounts {
    pub matched: usize,
    pub predicted: usize,
    pub truth: usize,
}

impl DetectionCounts {
    pub fn add(&mut self, other: DetectionCounts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.truth += other.truth;
    }

    pub fn scores(&self) -> DetectionScores {
        let ratio = |d: usize| (d > 0).then(|| self.matched as f64 / d as f64);
        let recall = ratio(self.truth);
        let precision = ratio(self.predicted);
        DetectionScores {
            recall: recall.unwrap_or(0.0),
            precision: precision.unwrap_or(0.0),
            recall_defined: recall.is_some(),
            precision_defined: precision.is_some(),
        }
    }
}

/// Recall and precision; an undefined ratio (zero denominator) is reported as
/// 0 with its flag cleared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScores {
    pub recall: f64,
    pub precision: f64,
    pub recall_defined: bool,
    pub precision_defined: bool,
}

pub fn detection_counts(pred: &[BBox], truth: &[BBox], match_iou: f64) -> DetectionCounts {
    let matched = greedy_match(pred, truth)
        .into_iter()
        .filter(|&(_, _, iou)| iou >= match_iou)
        .count();
    DetectionCounts { matched, predicted: pred.len(), truth: truth.len() }
}

pub fn detection_pr(pred: &[BBox], truth: &[BBox], match_iou: f64) -> DetectionScores {
    detection_counts(pred, truth, match_iou).scores()
}

/// Page score: matched IOU mass divided by `max(|pred|, |truth|)`, so both
/// missed and spurious boxes cost. Two empty lists score 1.
pub fn page_iou(pred: &[BBox], truth: &[BBox]) -> f64 {
    let denom = pred.len().max(truth.len());
    if denom == 0 {
        return 1.0;
    }
    greedy_match(pred, truth).iter().map(|m| m.2).sum::<f64>() / denom as f64
}

/// Grid search for the cut maximizing mean page IOU; ties go to the larger
/// cut. Returns `(t*, mean IOU at t*)`.
pub fn tune_threshold(
    masks: &[ProbMask],
    truth: &[Vec<BBox>],
    grid: &[f64],
    min_area_frac: f64,
) -> Result<(f64, f64)> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("validation masks"));
    }
    if masks.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: masks.len(), got: truth.len() });
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("threshold grid"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &t in grid {
        let params = MaskParams { threshold: t, min_area_frac };
        let total: f64 = masks
            .iter()
            .zip(truth)
            .map(|(m, tb)| page_iou(&mask_to_boxes(m, params), tb))
            .sum();
        let mean = total / masks.len() as f64;
        best = match best {
            Some((bt, bm)) if bm > mean || (bm == mean && bt > t) => Some((bt, bm)),
            _ => Some((t, mean)),
        };
    }
    Ok(best.expect("grid is non-empty"))
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).map(|t| (t * 100.0).round() / 100.0).collect()
}

pub fn write_box_csv<W: Write>(mut out: W, pages: &[(u32, Vec<BBox>)]) -> Result<()> {
    writeln!(out, "page,left,top,width,height")?;
    for (page, boxes) in pages {
        for b in boxes {
            writeln!(out, "{page},{},{},{},{}", b.left, b.top, b.width, b.height)?;
        }
    }
    Ok(())
}

/// Reads `page,left,top,width,height` rows, in file order.
pub fn read_box_csv<R: BufRead>(input: R) -> Result<Vec<(u32, BBox)>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("page")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: Vec<u32> = fields
            .iter()
            .map(|f| f.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("box csv line {}: {line:?}", lineno + 1)))?;
        if nums.len() != 5 {
            return Err(Error::Parse(format!("box csv line {} needs 5 fields", lineno + 1)));
        }
        let b = BBox::try_new(nums[1], nums[2], nums[3], nums[4])
            .ok_or_else(|| Error::Parse(format!("box csv line {}: zero-sized box", lineno + 1)))?;
        out.push((nums[0], b));
    }
    Ok(out)
}
