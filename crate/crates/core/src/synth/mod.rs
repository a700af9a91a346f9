//! Seeded generators for financial-style tables with ground truth at every
//! stage: word records and segment labels, table probability masks, and
//! ruled page rasters.
//!
//! All layout arithmetic is integer; the same spec yields the same output
//! on every platform.

mod mask;
mod render;

pub use mask::{gen_mask_page, MaskPage, MaskPageSpec};
pub use render::{render_raster, RenderedTable};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{BBox, WordRecord};
use crate::ingest::{LabeledTable, TableWords};

pub const WORD_HEIGHT: u32 = 20;
pub const ROW_PITCH: u32 = 36;
/// Widest numeric cell the layout reserves room for.
const NUM_COL_WIDTH: u32 = 100;

const LABEL_WORDS: &[&str] = &[
    "Trade", "payables", "Notes", "payable", "Derivative", "financial", "liabilities", "Other",
    "accruals", "Provisions", "Deferred", "revenue", "Income", "tax", "Borrowings", "Cash",
    "equivalents", "Inventories", "receivables", "Property", "plant", "equipment", "Goodwill",
    "Intangible", "assets", "Share", "capital", "Retained", "earnings", "Revenue", "Cost", "sales",
    "Gross", "profit", "Operating", "expenses", "Finance", "costs", "Interest", "income",
    "Depreciation", "amortisation", "Less", "imputed", "interest", "Accrued", "Prepayments",
    "Current", "portion", "lease", "Dividends", "paid", "Net", "loss", "before", "after",
    "Amounts", "utilized", "Balance", "beginning", "end", "year", "and", "from", "operations",
    "Bank", "loans", "Deposits", "Investments", "subsidiaries", "Minority", "Reserves",
];

const CURRENCY_HEADERS: &[&str] = &["US$'000", "RM'000", "HK$'000", "S$'000", "$'000"];

/// Pixel width of one rendered character.
pub fn char_width(c: char) -> u32 {
    match c {
        'i' | 'l' | 'j' | 'I' | '.' | ',' | '\'' | '|' | ':' | ';' | '!' => 4,
        '(' | ')' | '-' | 'f' | 't' | 'r' => 5,
        'm' | 'w' | 'M' | 'W' => 14,
        '%' => 12,
        '0'..='9' | '$' => 10,
        c if c.is_ascii_uppercase() => 12,
        c if c.is_ascii_lowercase() => 9,
        _ => 10,
    }
}

pub fn text_width(s: &str) -> u32 {
    s.chars().map(char_width).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Clean,
    Noisy,
    /// Two table families that differ only in their header row; data rows
    /// need the header context to be segmented correctly.
    Context,
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Self::Clean),
            "noisy" => Ok(Self::Noisy),
            "context" => Ok(Self::Context),
            other => Err(Error::InvalidArgument(format!("unknown difficulty {other:?}"))),
        }
    }
}

/// Horizontal anchoring of the numeric columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Align {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Inclusive row count range, header and total rows included.
    pub rows: (u32, u32),
    /// Inclusive column count range, one label column included. Context
    /// tables of the two-text-column family carry one extra column.
    pub cols: (u32, u32),
    /// Words per label cell.
    pub label_words: (u32, u32),
    /// Max absolute x offset per cell; y offsets are capped at 2.
    pub jitter: u32,
    /// Chance a multi-word cell has one unusually wide internal gap.
    pub merged_gap_prob: f64,
    /// Chance a numeric cell carries a separate `$` token.
    pub currency_prob: f64,
    /// Chance each word goes missing.
    pub drop_prob: f64,
    /// Chance a row picks up a low-confidence junk token.
    pub junk_prob: f64,
    /// Chance a numeric cell is blank.
    pub empty_cell_prob: f64,
    /// Confidence range for real words.
    pub conf: (u32, u32),
    /// Two text columns or one, decided per table by a header cue.
    pub context_cue: bool,
    pub num_align: Align,
    pub page_width: u32,
    pub page_height: u32,
}

impl SynthSpec {
    pub fn preset(difficulty: Difficulty, seed: u64) -> Self {
        let clean = Self {
            seed,
            rows: (3, 30),
            cols: (2, 8),
            label_words: (1, 4),
            jitter: 0,
            merged_gap_prob: 0.0,
            currency_prob: 0.0,
            drop_prob: 0.0,
            junk_prob: 0.0,
            empty_cell_prob: 0.0,
            conf: (96, 96),
            context_cue: false,
            num_align: Align::Right,
            page_width: 2550,
            page_height: 3300,
        };
        match difficulty {
            Difficulty::Clean => clean,
            Difficulty::Noisy => Self {
                jitter: 3,
                merged_gap_prob: 0.15,
                currency_prob: 0.1,
                drop_prob: 0.02,
                junk_prob: 0.15,
                empty_cell_prob: 0.05,
                conf: (60, 99),
                ..clean
            },
            Difficulty::Context => Self { rows: (6, 16), cols: (2, 3), context_cue: true, ..clean },
        }
    }

    /// Spec for the `index`-th table of a corpus seeded with `self.seed`.
    pub fn for_table(&self, index: u64) -> Self {
        Self { seed: split_seed(self.seed, index), ..self.clone() }
    }
}

/// SplitMix64 step over `seed + index`; decorrelates per-table streams.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A true cell of the generated grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueCell {
    pub row: usize,
    pub col: usize,
    pub text: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTable {
    /// Words (junk included) with gold labels.
    pub table: LabeledTable,
    /// Ground-truth grid, rows x columns, empty strings for blank positions.
    pub grid: Vec<Vec<String>>,
    pub cells: Vec<TrueCell>,
    /// Header row count (rules are drawn beneath it).
    pub header_rows: usize,
}

impl SynthTable {
    pub fn true_cell_count(&self) -> usize {
        self.cells.len()
    }
}

struct Draft {
    row: usize,
    col: usize,
    words: Vec<(String, u32, u32)>, // text, left, top
}

fn label_phrase(rng: &mut ChaCha8Rng, spec: &SynthSpec, min_w: u32, max_w: u32) -> Vec<String> {
    let (lo, hi) = spec.label_words;
    for _ in 0..200 {
        let k = rng.gen_range(lo..=hi) as usize;
        let words: Vec<String> = (0..k).map(|_| LABEL_WORDS.choose(rng).unwrap().to_string()).collect();
        let w = phrase_width(&words, 10);
        if (min_w..=max_w).contains(&w) {
            return words;
        }
    }
    // Fall back to growing one word at a time.
    let mut words = Vec::new();
    while phrase_width(&words, 10) < min_w {
        let cand = LABEL_WORDS.choose(rng).unwrap().to_string();
        let mut next = words.clone();
        next.push(cand);
        if phrase_width(&next, 10) <= max_w {
            words = next;
        }
    }
    words
}

fn phrase_width(words: &[String], gap: u32) -> u32 {
    let w: u32 = words.iter().map(|w| text_width(w)).sum();
    w + gap * words.len().saturating_sub(1) as u32
}

fn format_amount(rng: &mut ChaCha8Rng) -> String {
    let digits = rng.gen_range(4..=8u32);
    let lo = 10u64.pow(digits - 1);
    let v: u64 = rng.gen_range(lo..lo * 10);
    let s = v.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    if rng.gen_bool(0.2) {
        format!("({out})")
    } else {
        out
    }
}

/// Leading words of context-table rows. They all render 48 pixels wide, so
/// both table families have identical spatial features.
const CODE_WORDS: &[&str] = &[
    "Bonds", "Usage", "Goods", "Banks", "Hedge", "Scope", "Shops", "Codes", "Bases", "Pages", "Phase",
    "Cases",
];

const CODE_WIDTH: u32 = 48;
/// Leading code words per context row.
const CONTEXT_CODES: usize = 2;
const CONTEXT_HEADERS: [&str; CONTEXT_CODES + 1] = ["Code", "Type", "Account"];

/// One table with gold labels and its true grid.
pub fn gen_table(spec: &SynthSpec) -> Result<SynthTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_rows = rng.gen_range(spec.rows.0..=spec.rows.1) as usize;
    let n_cols = rng.gen_range(spec.cols.0..=spec.cols.1) as usize;
    let coded = spec.context_cue && rng.gen_bool(0.5);
    let text_cols = if coded { CONTEXT_CODES + 1 } else { 1 };
    if n_cols < 2 || n_rows < 2 {
        return Err(Error::Infeasible(format!("{n_rows} rows x {n_cols} cols leaves no numeric column")));
    }
    let n_num = n_cols - 1;

    let left0: u32 = rng.gen_range(40..=120);
    let top0: u32 = rng.gen_range(40..=120);
    let mut label_width: u32 = rng.gen_range(160..=360);
    if spec.context_cue {
        label_width = CONTEXT_CODES as u32 * (CODE_WIDTH + 14) + SECOND_WORD_MAX;
    }
    let label_gap: u32 = rng.gen_range(150..=250);
    let col_gap: u32 = rng.gen_range(60..=120);
    let mut anchors = Vec::with_capacity(n_num);
    let mut right = left0 + label_width + label_gap + NUM_COL_WIDTH;
    for _ in 0..n_num {
        anchors.push(right);
        right += col_gap + NUM_COL_WIDTH;
    }
    let table_right = anchors.last().copied().unwrap() + spec.jitter;
    let table_bottom = top0 + n_rows as u32 * ROW_PITCH + 2;
    if table_right + 40 > spec.page_width || table_bottom + 40 > spec.page_height {
        return Err(Error::Infeasible(format!(
            "table needs {table_right}x{table_bottom} px on a {}x{} page",
            spec.page_width, spec.page_height
        )));
    }

    let year0: u32 = rng.gen_range(2005..=2021);
    let currency = rng.gen_bool(0.5).then(|| *CURRENCY_HEADERS.choose(&mut rng).unwrap());

    let mut drafts: Vec<Draft> = Vec::new();
    for r in 0..n_rows {
        let top = top0 + r as u32 * ROW_PITCH;
        let header = r == 0;
        let jy = |rng: &mut ChaCha8Rng| -> i64 {
            let j = spec.jitter.min(2) as i64;
            rng.gen_range(-j..=j)
        };
        let jx = |rng: &mut ChaCha8Rng| -> i64 {
            let j = spec.jitter as i64;
            rng.gen_range(-j..=j)
        };

        // Text columns.
        if header {
            if spec.context_cue {
                if coded {
                    for (col, head) in CONTEXT_HEADERS.iter().enumerate() {
                        let x = left0 + col as u32 * (CODE_WIDTH + 10);
                        drafts.push(cell_words(0, col, &[head.to_string()], x as i64, top as i64, 10));
                    }
                } else {
                    drafts.push(cell_words(0, 0, &["Description".into()], left0 as i64, top as i64, 10));
                }
            } else {
                let phrase = label_phrase(&mut rng, spec, label_width * 45 / 100, label_width);
                drafts.push(cell_words(0, 0, &phrase, left0 as i64, top as i64, 10));
            }
        } else {
            let (x, y) = (left0 as i64 + jx(&mut rng), top as i64 + jy(&mut rng));
            if spec.context_cue {
                let mut words: Vec<String> =
                    (0..CONTEXT_CODES).map(|_| CODE_WORDS.choose(&mut rng).unwrap().to_string()).collect();
                words.push(second_word(&mut rng));
                let gap = rng.gen_range(8..=14);
                if coded {
                    for (c, w) in words.into_iter().enumerate() {
                        let wx = x + (c as u32 * (CODE_WIDTH + gap)) as i64;
                        drafts.push(cell_words(r, c, &[w], wx, y, gap));
                    }
                } else {
                    drafts.push(cell_words(r, 0, &words, x, y, gap));
                }
            } else {
                let phrase = label_phrase(&mut rng, spec, label_width * 45 / 100, label_width);
                let mut draft = Draft { row: r, col: 0, words: Vec::new() };
                let mut cursor = x;
                let wide_at = (phrase.len() > 1 && rng.gen_bool(spec.merged_gap_prob))
                    .then(|| rng.gen_range(0..phrase.len() - 1));
                for (i, w) in phrase.iter().enumerate() {
                    draft.words.push((w.clone(), cursor.max(0) as u32, y.max(0) as u32));
                    let gap = if wide_at == Some(i) {
                        rng.gen_range(24..=34)
                    } else if spec.jitter > 0 {
                        rng.gen_range(8..=14)
                    } else {
                        10
                    };
                    cursor += (text_width(w) + gap) as i64;
                }
                drafts.push(draft);
            }
        }

        // Numeric columns.
        for (c, &anchor) in anchors.iter().enumerate() {
            let col = text_cols + c;
            let (dx, dy) = (jx(&mut rng), jy(&mut rng));
            let y = top as i64 + dy;
            let text = if header {
                match currency {
                    Some(cur) => cur.to_string(),
                    None => (year0 - c as u32).to_string(),
                }
            } else {
                if rng.gen_bool(spec.empty_cell_prob) {
                    continue;
                }
                format_amount(&mut rng)
            };
            let width = text_width(&text) as i64;
            let with_dollar = !header && rng.gen_bool(spec.currency_prob);
            let prefix = if with_dollar { 20 } else { 0 };
            let left = match spec.num_align {
                Align::Right => anchor as i64 + dx - width,
                Align::Left => anchor as i64 - NUM_COL_WIDTH as i64 + dx + prefix,
            };
            let mut draft = Draft { row: r, col, words: Vec::new() };
            if with_dollar {
                draft.words.push(("$".into(), (left - prefix) as u32, y as u32));
            }
            draft.words.push((text, left as u32, y as u32));
            drafts.push(draft);
        }
    }

    // Drop words, then build rows.
    for d in &mut drafts {
        d.words.retain(|_| !rng.gen_bool(spec.drop_prob));
    }
    drafts.retain(|d| !d.words.is_empty());
    let used_rows: Vec<usize> = {
        let mut v: Vec<usize> = drafts.iter().map(|d| d.row).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let used_cols: Vec<usize> = {
        let mut v: Vec<usize> = drafts.iter().map(|d| d.col).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let row_index = |r: usize| used_rows.binary_search(&r).unwrap();
    let col_index = |c: usize| used_cols.binary_search(&c).unwrap();

    let mut grid = vec![vec![String::new(); used_cols.len()]; used_rows.len()];
    let mut cells = Vec::new();
    let mut rows: Vec<Vec<(WordRecord, u8)>> = vec![Vec::new(); used_rows.len()];
    for d in &drafts {
        let (ri, ci) = (row_index(d.row), col_index(d.col));
        let text = d.words.iter().map(|w| w.0.as_str()).collect::<Vec<_>>().join(" ");
        let mut bbox: Option<BBox> = None;
        for (i, (t, left, top)) in d.words.iter().enumerate() {
            let b = BBox::new(*left, *top, text_width(t), WORD_HEIGHT);
            bbox = Some(bbox.map_or(b, |acc| acc.union(&b)));
            let conf = rng.gen_range(spec.conf.0..=spec.conf.1) as f64;
            let word = WordRecord {
                text: t.clone(),
                bbox: b,
                conf,
                page: 1,
                block: 1,
                par: 1,
                line: ri as u32 + 1,
                word: 0,
                tag: None,
            };
            rows[ri].push((word, (i + 1 == d.words.len()) as u8));
        }
        grid[ri][ci] = text.clone();
        cells.push(TrueCell { row: ri, col: ci, text, bbox: bbox.unwrap() });
    }

    // Junk tokens sit in the gap after the first cell and are never last.
    for row in rows.iter_mut() {
        row.sort_by_key(|(w, _)| w.bbox.left);
        if row.len() >= 2 && rng.gen_bool(spec.junk_prob) {
            let a = row[0].0.bbox;
            let b = row[1].0.bbox;
            if b.left > a.right() + 12 {
                let x = rng.gen_range(a.right() + 4..b.left - 6);
                let junk = WordRecord {
                    text: "|".into(),
                    bbox: BBox::new(x, a.top, 4, WORD_HEIGHT),
                    conf: rng.gen_range(5..=25) as f64,
                    page: 1,
                    block: 1,
                    par: 1,
                    line: a.top,
                    word: 0,
                    tag: None,
                };
                row.insert(1, (junk, 0));
            }
        }
    }

    let mut word_rows = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (ri, row) in rows.into_iter().enumerate() {
        let mut words = Vec::with_capacity(row.len());
        let mut lab = Vec::with_capacity(row.len());
        for (i, (mut w, l)) in row.into_iter().enumerate() {
            w.line = ri as u32 + 1;
            w.word = i as u32 + 1;
            words.push(w);
            lab.push(l);
        }
        word_rows.push(words);
        labels.push(lab);
    }
    cells.sort_by_key(|c| (c.row, c.col));
    let header_rows = usize::from(used_rows.first() == Some(&0));
    Ok(SynthTable {
        table: LabeledTable {
            id: format!("synth-{:016x}", spec.seed),
            words: TableWords { rows: word_rows },
            labels: Some(labels),
            true_cells: Some(cells.len()),
        },
        grid,
        cells,
        header_rows,
    })
}

const SECOND_WORD_MAX: u32 = 120;

fn second_word(rng: &mut ChaCha8Rng) -> String {
    loop {
        let w = LABEL_WORDS.choose(rng).unwrap();
        if (45..=SECOND_WORD_MAX).contains(&text_width(w)) {
            return w.to_string();
        }
    }
}

fn cell_words(row: usize, col: usize, words: &[String], x: i64, y: i64, gap: u32) -> Draft {
    let mut cursor = x;
    let mut out = Vec::new();
    for w in words {
        out.push((w.clone(), cursor.max(0) as u32, y.max(0) as u32));
        cursor += (text_width(w) + gap) as i64;
    }
    Draft { row, col, words: out }
}

/// `n` tables from per-table split seeds. Specs that cannot be laid out are
/// skipped in favour of the next index, so the corpus is still deterministic.
pub fn gen_corpus(base: &SynthSpec, n: usize) -> Vec<SynthTable> {
    let mut out = Vec::with_capacity(n);
    let mut index = 0u64;
    while out.len() < n {
        if let Ok(t) = gen_table(&base.for_table(index)) {
            out.push(t);
        }
        index += 1;
    }
    out
}
