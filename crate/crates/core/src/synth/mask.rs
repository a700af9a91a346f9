use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::BBox;
use crate::maskpost::ProbMask;

/// Layout of one synthetic page of table probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPageSpec {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub inside: f64,
    pub outside: f64,
    /// When set, each box gets a one-pixel inner ring at `cut + band_delta`
    /// and outer ring at `cut - band_delta`, so only cuts in
    /// `(cut - band_delta, cut + band_delta]` recover the exact boxes.
    pub cut: Option<f64>,
    pub band_delta: f64,
    pub holes: bool,
    pub ragged: bool,
    pub speckle: bool,
    /// Place the second box 2 to 4 pixels from the first.
    pub adjacent: bool,
}

impl MaskPageSpec {
    /// Plain blobs: any cut in `(outside, inside]` is exact.
    pub fn clean(seed: u64) -> Self {
        Self {
            seed,
            width: 384,
            height: 288,
            inside: 0.9,
            outside: 0.05,
            cut: None,
            band_delta: 0.04,
            holes: false,
            ragged: false,
            speckle: false,
            adjacent: false,
        }
    }

    /// Edge rings around `cut` plus holes, ragged borders and speckle.
    pub fn banded(seed: u64, cut: f64) -> Self {
        Self { cut: Some(cut), holes: true, ragged: true, speckle: true, ..Self::clean(seed) }
    }

    /// Half-open interval `(lo, hi]` of cuts that reproduce the true boxes.
    pub fn optimum(&self) -> (f64, f64) {
        match self.cut {
            Some(c) => (c - self.band_delta, c + self.band_delta),
            None => (self.outside, self.inside),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPage {
    pub mask: ProbMask,
    pub boxes: Vec<BBox>,
    /// Pixel boxes of the speckle blobs, all under 1% of the page.
    pub speckles: Vec<BBox>,
    pub optimum: (f64, f64),
}

fn chebyshev_gap(a: &BBox, b: &BBox) -> i64 {
    let dx = (a.left as i64 - b.right() as i64).max(b.left as i64 - a.right() as i64);
    let dy = (a.top as i64 - b.bottom() as i64).max(b.top as i64 - a.bottom() as i64);
    dx.max(dy)
}

fn fill(mask: &mut ProbMask, b: &BBox, p: f64) {
    for y in b.top..b.bottom() {
        for x in b.left..b.right() {
            mask.set(x, y, p);
        }
    }
}

/// One to three non-overlapping table blobs on a background of low
/// probability. Boxes keep at least 6 pixels apart unless `adjacent` is set.
pub fn gen_mask_page(spec: &MaskPageSpec) -> MaskPage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let n = if spec.adjacent { rng.gen_range(2..=3usize) } else { rng.gen_range(1..=3usize) };
    let max_w = (w / 2).max(61);
    let max_h = (h / 2).max(41);
    let mut boxes: Vec<BBox> = Vec::new();
    for i in 0..n {
        for _ in 0..200 {
            let bw = rng.gen_range(60..max_w);
            let bh = rng.gen_range(40..max_h);
            let cand = if spec.adjacent && i == 0 {
                // Top-left quadrant leaves room for the neighbour.
                BBox::new(rng.gen_range(2..(w / 4).max(3)), rng.gen_range(2..(h / 4).max(3)), bw, bh)
            } else if spec.adjacent && i == 1 {
                let prev = boxes[0];
                let gap = rng.gen_range(2..=4);
                let room_x = w.saturating_sub(prev.right() + gap + 2);
                let room_y = h.saturating_sub(prev.bottom() + gap + 2);
                if rng.gen_bool(0.5) && room_x >= 60 {
                    BBox::new(prev.right() + gap, prev.top, bw.min(room_x), bh)
                } else if room_y >= 40 {
                    BBox::new(prev.left, prev.bottom() + gap, bw, bh.min(room_y))
                } else {
                    BBox::new(prev.right() + gap, prev.top, bw.min(room_x.max(1)), bh)
                }
            } else {
                let left = rng.gen_range(2..w.saturating_sub(bw + 2).max(3));
                let top = rng.gen_range(2..h.saturating_sub(bh + 2).max(3));
                BBox::new(left, top, bw, bh)
            };
            let fits = cand.right() + 2 <= w && cand.bottom() + 2 <= h;
            let min_gap = if spec.adjacent && i == 1 { 2 } else { 6 };
            if fits && boxes.iter().all(|b| chebyshev_gap(b, &cand) >= min_gap) {
                boxes.push(cand);
                break;
            }
        }
    }
    if boxes.is_empty() {
        boxes.push(BBox::new(2, 2, 60.min(w - 4), 40.min(h - 4)));
    }

    let mut mask = ProbMask::filled(w, h, spec.outside);
    for b in &boxes {
        if let Some(cut) = spec.cut {
            let outer = BBox::new(b.left - 1, b.top - 1, b.width + 2, b.height + 2);
            fill(&mut mask, &outer, cut - spec.band_delta);
            fill(&mut mask, b, cut + spec.band_delta);
            let core = BBox::new(b.left + 1, b.top + 1, b.width - 2, b.height - 2);
            fill(&mut mask, &core, spec.inside);
        } else {
            fill(&mut mask, b, spec.inside);
        }
    }
    for b in &boxes {
        if spec.holes {
            for _ in 0..rng.gen_range(1..=3) {
                let hw = rng.gen_range(1..=(b.width / 4).max(1));
                let hh = rng.gen_range(1..=(b.height / 4).max(1));
                let x = rng.gen_range(b.left + 2..b.right() - 2 - hw);
                let y = rng.gen_range(b.top + 2..b.bottom() - 2 - hh);
                fill(&mut mask, &BBox::new(x, y, hw, hh), spec.outside);
            }
        }
        if spec.ragged {
            // Notches along the top and bottom borders; corners stay.
            for y in [b.top, b.bottom() - 1] {
                let len = rng.gen_range(1..=(b.width / 4).max(1));
                let x = rng.gen_range(b.left + 1..b.right() - 1 - len);
                fill(&mut mask, &BBox::new(x, y, len, 1), spec.outside);
            }
        }
    }

    let mut speckles = Vec::new();
    if spec.speckle {
        for _ in 0..rng.gen_range(1..=6) {
            let s = rng.gen_range(1..=6u32);
            let x = rng.gen_range(0..w - s);
            let y = rng.gen_range(0..h - s);
            let blob = BBox::new(x, y, s, s);
            if boxes.iter().all(|b| chebyshev_gap(b, &blob) >= 3)
                && speckles.iter().all(|o| chebyshev_gap(o, &blob) >= 2)
            {
                fill(&mut mask, &blob, spec.inside);
                speckles.push(blob);
            }
        }
    }
    MaskPage { mask, boxes, speckles, optimum: spec.optimum() }
}
