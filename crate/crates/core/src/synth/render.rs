use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{char_width, SynthTable};
use crate::geom::BBox;
use crate::ingest::DEFAULT_MIN_CONF;
use crate::maskpost::BoolMask;
use crate::raster::GrayImage;

/// Distance from the outermost glyph to the frame rules.
const FRAME_MARGIN: i64 = 8;
const IMAGE_MARGIN: i64 = 12;
/// Narrower column gaps get no vertical rule.
const MIN_RULED_GAP: i64 = 20;

/// A rendered table with the exact pixel sets that were painted.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    pub image: GrayImage,
    /// Page coordinate of image pixel (0, 0).
    pub origin: (i64, i64),
    pub rule_pixels: BoolMask,
    pub glyph_pixels: BoolMask,
}

/// Draws every confident word as one dark rectangle per character on a
/// noisy light background, with an outer frame, a rule under the header and
/// vertical rules in column gaps of at least 20 pixels when `rules` is set.
pub fn render_raster(table: &SynthTable, rules: bool, seed: u64) -> RenderedTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hull = table
        .cells
        .iter()
        .map(|c| c.bbox)
        .reduce(|a, b| a.union(&b))
        .unwrap_or_else(|| BBox::new(0, 0, 1, 1));
    let (fl, ft) = (hull.left as i64 - FRAME_MARGIN, hull.top as i64 - FRAME_MARGIN);
    let (fr, fb) = (hull.right() as i64 + FRAME_MARGIN, hull.bottom() as i64 + FRAME_MARGIN);
    let origin = (fl - IMAGE_MARGIN, ft - IMAGE_MARGIN);
    let width = (fr - fl + 2 * IMAGE_MARGIN) as u32;
    let height = (fb - ft + 2 * IMAGE_MARGIN) as u32;

    let mut pixels: Vec<u8> = (0..width as usize * height as usize).map(|_| rng.gen_range(225..=255)).collect();
    let mut rule_pixels = BoolMask::new(width, height);
    let mut glyph_pixels = BoolMask::new(width, height);
    let paint = |mask: &mut BoolMask, px: &mut Vec<u8>, x0: i64, y0: i64, x1: i64, y1: i64, v: u8| {
        for y in y0.max(origin.1)..y1.min(origin.1 + height as i64) {
            for x in x0.max(origin.0)..x1.min(origin.0 + width as i64) {
                let (ix, iy) = ((x - origin.0) as u32, (y - origin.1) as u32);
                px[iy as usize * width as usize + ix as usize] = v;
                mask.set(ix, iy, true);
            }
        }
    };

    for word in table.table.words.words().filter(|w| w.conf >= DEFAULT_MIN_CONF as f64) {
        let b = word.bbox;
        let mut x = b.left as i64;
        for c in word.text.chars() {
            let cw = char_width(c) as i64;
            let v = rng.gen_range(10..=60);
            paint(&mut glyph_pixels, &mut pixels, x + 1, b.top as i64 + 2, x + cw - 1, b.bottom() as i64 - 2, v);
            x += cw;
        }
    }

    if rules {
        let mut rule = |x0: i64, y0: i64, x1: i64, y1: i64, rng: &mut ChaCha8Rng| {
            let v = rng.gen_range(20..=70);
            paint(&mut rule_pixels, &mut pixels, x0, y0, x1, y1, v);
        };
        let t = rng.gen_range(1..=2i64);
        rule(fl, ft, fr, ft + t, &mut rng);
        rule(fl, fb - t, fr, fb, &mut rng);
        rule(fl, ft, fl + t, fb, &mut rng);
        rule(fr - t, ft, fr, fb, &mut rng);
        if table.header_rows > 0 {
            let header_bottom = table.cells.iter().filter(|c| c.row == 0).map(|c| c.bbox.bottom()).max();
            let body_top = table.cells.iter().filter(|c| c.row == 1).map(|c| c.bbox.top).min();
            if let (Some(hb), Some(bt)) = (header_bottom, body_top) {
                let y = (hb as i64 + bt as i64) / 2;
                rule(fl, y, fr, y + t, &mut rng);
            }
        }
        let n_cols = table.grid.first().map_or(0, Vec::len);
        let extents: Vec<Option<(i64, i64)>> = (0..n_cols)
            .map(|c| {
                let xs = table.cells.iter().filter(|cell| cell.col == c);
                xs.fold(None, |acc: Option<(i64, i64)>, cell| {
                    let (lo, hi) = (cell.bbox.left as i64, cell.bbox.right() as i64);
                    Some(acc.map_or((lo, hi), |(a, b)| (a.min(lo), b.max(hi))))
                })
            })
            .collect();
        for pair in extents.windows(2) {
            if let [Some((_, hi)), Some((lo, _))] = pair {
                if lo - hi >= MIN_RULED_GAP {
                    let x = (hi + lo) / 2;
                    rule(x, ft, x + t, fb, &mut rng);
                }
            }
        }
    }

    let image = GrayImage::from_vec(width, height, pixels).expect("buffer matches dimensions");
    RenderedTable { image, origin, rule_pixels, glyph_pixels }
}
