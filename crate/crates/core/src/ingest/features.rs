use crate::error::{Error, Result};
use crate::geom::WordRecord;
use crate::ingest::{Tagger, TableWords, Vocab};

pub const DIST_NEXT: usize = 0;
pub const DIST_PREV: usize = 1;
pub const ROW_START: usize = 2;
pub const ROW_END: usize = 3;

/// `(dist_next, dist_prev, start_flag, end_flag)`. Exactly two entries are
/// active per token; activity is tracked explicitly because an active
/// distance is legitimately 0 when two boxes touch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialFeatures {
    pub values: [f64; 4],
    pub active: [bool; 4],
}

impl SpatialFeatures {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    pub tag_id: u32,
    pub spatial: SpatialFeatures,
    pub label: Option<u8>,
}

/// Rows of per-token model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedTable {
    pub rows: Vec<Vec<TokenFeatures>>,
}

impl FeaturizedTable {
    pub fn token_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &TokenFeatures> {
        self.rows.iter().flatten()
    }

    pub fn is_labeled(&self) -> bool {
        self.tokens().all(|t| t.label.is_some())
    }

    /// Gold labels in row-major order, if every token has one.
    pub fn labels(&self) -> Option<Vec<u8>> {
        self.tokens().map(|t| t.label).collect()
    }
}

fn gap_ratio(from: &WordRecord, to: &WordRecord, norm_len: f64) -> f64 {
    let gap = to.bbox.left as f64 - from.bbox.right() as f64;
    (gap.max(0.0) / norm_len).clamp(0.0, 1.0)
}

pub fn spatial_features(row: &[WordRecord], norm_len: f64) -> Vec<SpatialFeatures> {
    assert!(norm_len > 0.0, "normalizer must be positive");
    let n = row.len();
    (0..n)
        .map(|i| {
            let mut f = SpatialFeatures { values: [0.0; 4], active: [false; 4] };
            if i + 1 < n {
                f.values[DIST_NEXT] = gap_ratio(&row[i], &row[i + 1], norm_len);
                f.active[DIST_NEXT] = true;
            } else {
                f.values[ROW_END] = 1.0;
                f.active[ROW_END] = true;
            }
            if i > 0 {
                f.values[DIST_PREV] = gap_ratio(&row[i - 1], &row[i], norm_len);
                f.active[DIST_PREV] = true;
            } else {
                f.values[ROW_START] = 1.0;
                f.active[ROW_START] = true;
            }
            f
        })
        .collect()
}

/// Widest row extent, leftmost left edge to rightmost right edge.
pub fn norm_len(table: &TableWords) -> f64 {
    table
        .rows
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let lo = r.iter().map(|w| w.bbox.left).min().unwrap();
            let hi = r.iter().map(|w| w.bbox.right()).max().unwrap();
            (hi - lo) as f64
        })
        .fold(1.0, f64::max)
}

/// Tag ids plus spatial features for every token. Labels, when given, are
/// attached positionally and every row must end on a 1.
pub fn featurize_table(
    table: &TableWords,
    vocab: &Vocab,
    tagger: &dyn Tagger,
    labels: Option<&[Vec<u8>]>,
) -> Result<FeaturizedTable> {
    if let Some(labels) = labels {
        if labels.len() != table.rows.len() {
            return Err(Error::LengthMismatch { expected: table.rows.len(), got: labels.len() });
        }
        for (row, lab) in table.rows.iter().zip(labels) {
            if row.len() != lab.len() {
                return Err(Error::LengthMismatch { expected: row.len(), got: lab.len() });
            }
            if lab.iter().any(|&l| l > 1) {
                return Err(Error::InvalidArgument("segment labels must be 0 or 1".into()));
            }
            if lab.last().is_some_and(|&l| l != 1) {
                return Err(Error::InvalidArgument("the final token of a row must close a segment".into()));
            }
        }
    }
    let norm = norm_len(table);
    let rows = table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            spatial_features(row, norm)
                .into_iter()
                .zip(row)
                .enumerate()
                .map(|(i, (spatial, w))| TokenFeatures {
                    tag_id: vocab.lookup(w, tagger),
                    spatial,
                    label: labels.map(|l| l[r][i]),
                })
                .collect()
        })
        .collect();
    Ok(FeaturizedTable { rows })
}
