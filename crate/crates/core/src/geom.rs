//! Pixel geometry shared by every stage: boxes, horizontal intervals and OCR
//! word records.
//!
//! Coordinates are half-open: a box covers columns `left..left + width` and
//! rows `top..top + height`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
}

impl BBox {
    /// Panics on a zero-sized box; use [`BBox::try_new`] for untrusted input.
    pub fn new(left: u32, top: u32, width: u32, height: u32) -> Self {
        Self::try_new(left, top, width, height).expect("box must have positive width and height")
    }

    pub fn try_new(left: u32, top: u32, width: u32, height: u32) -> Option<Self> {
        (width > 0 && height > 0).then_some(Self { left, top, width, height })
    }

    /// Box spanning `[left, right) x [top, bottom)`.
    pub fn from_edges(left: u32, top: u32, right: u32, bottom: u32) -> Option<Self> {
        Self::try_new(left, top, right.checked_sub(left)?, bottom.checked_sub(top)?)
    }

    pub fn right(&self) -> u32 {
        self.left + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.top + self.height
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn center_x(&self) -> f64 {
        self.left as f64 + self.width as f64 / 2.0
    }

    pub fn x_interval(&self) -> Interval {
        Interval::new(self.left, self.right())
    }

    pub fn y_interval(&self) -> Interval {
        Interval::new(self.top, self.bottom())
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.left && x < self.right() && y >= self.top && y < self.bottom()
    }

    pub fn union(&self, other: &BBox) -> BBox {
        let left = self.left.min(other.left);
        let top = self.top.min(other.top);
        let right = self.right().max(other.right());
        let bottom = self.bottom().max(other.bottom());
        BBox { left, top, width: right - left, height: bottom - top }
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        self.x_interval().overlap(&other.x_interval()) as u64
            * self.y_interval().overlap(&other.y_interval()) as u64
    }
}

/// Closed-open span `[lo, hi)` on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub fn new(lo: u32, hi: u32) -> Self {
        assert!(lo <= hi, "interval lo {lo} > hi {hi}");
        Self { lo, hi }
    }

    pub fn len(&self) -> u32 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    pub fn overlap(&self, other: &Interval) -> u32 {
        self.hi.min(other.hi).saturating_sub(self.lo.max(other.lo))
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

pub fn interval_iou(a: Interval, b: Interval) -> f64 {
    let inter = a.overlap(&b) as u64;
    let union = a.len() as u64 + b.len() as u64 - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// One OCR token with its layout identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRecord {
    pub text: String,
    pub bbox: BBox,
    /// Recognition confidence, 0..=100.
    pub conf: f64,
    pub page: u32,
    pub block: u32,
    pub par: u32,
    pub line: u32,
    pub word: u32,
    /// Precomputed combined tag; when absent the tagger derives one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl WordRecord {
    /// A word with confidence 100 and zeroed layout ids.
    pub fn simple(text: impl Into<String>, bbox: BBox) -> Self {
        Self { text: text.into(), bbox, conf: 100.0, page: 1, block: 0, par: 0, line: 0, word: 0, tag: None }
    }
}
