//! Column alignment: predicted segment ends become cells, cells are unified
//! into columns with an IOU-triggered union-find, and the result is laid out
//! as a grid.

mod dsu;
mod export;

pub use dsu::DisjointSet;
pub use export::{export, grid_from_json, ExportFormat};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{interval_iou, BBox, Interval};
use crate::ingest::TableWords;

pub const DEFAULT_IOU_TRIGGER: f64 = 0.25;
pub const DEFAULT_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub id: usize,
    pub text: String,
    pub bbox: BBox,
    pub row: usize,
}

/// Joins consecutive tokens up to and including each segment end
/// (`prob >= cutoff`). The last token of a row always closes a cell.
/// `probs` is row-major over all tokens.
pub fn merge_segments(table: &TableWords, probs: &[f64], cutoff: f64) -> Result<Vec<Vec<Cell>>> {
    let total = table.token_count();
    if probs.len() != total {
        return Err(Error::LengthMismatch { expected: total, got: probs.len() });
    }
    let mut next_id = 0;
    let mut k = 0;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (r, row) in table.rows.iter().enumerate() {
        let mut cells = Vec::new();
        let mut open: Option<(String, BBox)> = None;
        for (i, w) in row.iter().enumerate() {
            open = Some(match open {
                None => (w.text.clone(), w.bbox),
                Some((text, bbox)) => (format!("{text} {}", w.text), bbox.union(&w.bbox)),
            });
            let closes = probs[k] >= cutoff || i + 1 == row.len();
            k += 1;
            if closes {
                let (text, bbox) = open.take().expect("cell is open");
                cells.push(Cell { id: next_id, text, bbox, row: r });
                next_id += 1;
            }
        }
        rows.push(cells);
    }
    Ok(rows)
}

/// Walks rows top to bottom and joins each cell to the existing column whose
/// extent has the highest IOU with it, provided that IOU reaches
/// `iou_trigger`; ties go to the leftmost column. Otherwise the cell opens a
/// new column.
pub fn unify_columns(cells: &[Vec<Cell>], iou_trigger: f64) -> DisjointSet {
    let flat: Vec<&Cell> = cells.iter().flatten().collect();
    let mut extents = vec![Interval::new(0, 0); flat.len()];
    for c in &flat {
        extents[c.id] = c.bbox.x_interval();
    }
    let mut dsu = DisjointSet::new(extents);
    let mut active: Vec<usize> = Vec::new();
    for c in flat {
        let span = c.bbox.x_interval();
        let mut best: Option<(usize, f64, Interval)> = None;
        for (slot, &root) in active.iter().enumerate() {
            let ext = dsu.extent(root).expect("active roots are valid");
            let score = interval_iou(span, ext);
            if score < iou_trigger {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, s, e)) => score > s || (score == s && ext.lo < e.lo),
            };
            if better {
                best = Some((slot, score, ext));
            }
        }
        match best {
            Some((slot, _, _)) => {
                active[slot] = dsu.union(active[slot], c.id).expect("valid ids");
            }
            None => active.push(c.id),
        }
    }
    dsu
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub text: String,
    /// Source boxes of every cell placed here, left to right.
    pub boxes: Vec<BBox>,
}

impl GridCell {
    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableGrid {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cells: Vec<Vec<GridCell>>,
    /// Placements that landed on an occupied position.
    pub collisions: usize,
}

impl TableGrid {
    pub fn texts(&self) -> Vec<Vec<String>> {
        self.cells.iter().map(|r| r.iter().map(|c| c.text.clone()).collect()).collect()
    }

    pub fn nonempty_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| !c.is_empty()).count()
    }
}

/// Columns are the DSU roots ordered by the mean center-x of their members;
/// each cell goes to its row and its root's column. A second cell landing on
/// the same position is appended after a space and counted as a collision.
pub fn assemble_grid(cells: &[Vec<Cell>], dsu: &mut DisjointSet) -> TableGrid {
    let mut centers: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for c in cells.iter().flatten() {
        let root = dsu.find(c.id).expect("dsu covers every cell");
        let e = centers.entry(root).or_insert((0.0, 0));
        e.0 += c.bbox.center_x();
        e.1 += 1;
    }
    let mut order: Vec<(f64, usize)> = centers.iter().map(|(&r, &(s, n))| (s / n as f64, r)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let column_of: std::collections::HashMap<usize, usize> =
        order.iter().enumerate().map(|(col, &(_, root))| (root, col)).collect();

    let n_cols = order.len();
    let mut grid = vec![vec![GridCell::default(); n_cols]; cells.len()];
    let mut collisions = 0;
    for (r, row) in cells.iter().enumerate() {
        let mut ordered: Vec<&Cell> = row.iter().collect();
        ordered.sort_by_key(|c| (c.bbox.left, c.id));
        for c in ordered {
            let col = column_of[&dsu.find(c.id).expect("valid id")];
            let slot = &mut grid[r][col];
            if slot.is_empty() {
                slot.text = c.text.clone();
            } else {
                slot.text.push(' ');
                slot.text.push_str(&c.text);
                collisions += 1;
            }
            slot.boxes.push(c.bbox);
        }
    }
    TableGrid { n_rows: cells.len(), n_cols, cells: grid, collisions }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    pub cutoff: f64,
    pub iou_trigger: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self { cutoff: DEFAULT_CUTOFF, iou_trigger: DEFAULT_IOU_TRIGGER }
    }
}

/// merge, unify, assemble.
pub fn align_table(table: &TableWords, probs: &[f64], params: AlignParams) -> Result<TableGrid> {
    let cells = merge_segments(table, probs, params.cutoff)?;
    let mut dsu = unify_columns(&cells, params.iou_trigger);
    Ok(assemble_grid(&cells, &mut dsu))
}
