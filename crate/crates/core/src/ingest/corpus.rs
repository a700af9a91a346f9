//! Line-delimited JSON corpus: one table per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BBox, WordRecord};
use crate::ingest::TableWords;

pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusWord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTable {
    pub format_version: u32,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_cells: Option<usize>,
    pub rows: Vec<Vec<CorpusWord>>,
}

/// Grouped words with optional gold segment labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub id: String,
    pub words: TableWords,
    pub labels: Option<Vec<Vec<u8>>>,
    /// Ground-truth cell count; defaults to the number of gold segments.
    pub true_cells: Option<usize>,
}

impl LabeledTable {
    pub fn true_cell_count(&self) -> Option<usize> {
        self.true_cells.or_else(|| {
            self.labels
                .as_ref()
                .map(|l| l.iter().flatten().filter(|&&v| v == 1).count())
        })
    }

    /// Drops words below `min_conf` (and rows left empty) keeping labels aligned.
    pub fn filter_confidence(&self, min_conf: f64) -> LabeledTable {
        let mut rows = Vec::new();
        let mut labels: Vec<Vec<u8>> = Vec::new();
        for (r, row) in self.words.rows.iter().enumerate() {
            let keep: Vec<usize> = (0..row.len()).filter(|&i| row[i].conf >= min_conf).collect();
            if keep.is_empty() {
                continue;
            }
            rows.push(keep.iter().map(|&i| row[i].clone()).collect());
            if let Some(l) = &self.labels {
                labels.push(keep.iter().map(|&i| l[r][i]).collect());
            }
        }
        LabeledTable {
            id: self.id.clone(),
            words: TableWords { rows },
            labels: self.labels.as_ref().map(|_| labels),
            true_cells: self.true_cells,
        }
    }

    pub fn to_corpus(&self) -> CorpusTable {
        let rows = self
            .words
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .map(|(i, w)| CorpusWord {
                        text: w.text.clone(),
                        tag: w.tag.clone(),
                        left: w.bbox.left,
                        top: w.bbox.top,
                        width: w.bbox.width,
                        height: w.bbox.height,
                        conf: Some(w.conf),
                        label: self.labels.as_ref().map(|l| l[r][i]),
                    })
                    .collect()
            })
            .collect();
        CorpusTable {
            format_version: CORPUS_FORMAT_VERSION,
            id: self.id.clone(),
            true_cells: self.true_cells,
            rows,
        }
    }

    pub fn from_corpus(t: CorpusTable) -> Result<Self> {
        if t.format_version != CORPUS_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "table {}: corpus format_version {} unsupported (expected {CORPUS_FORMAT_VERSION})",
                t.id, t.format_version
            )));
        }
        let n_labeled = t.rows.iter().flatten().filter(|w| w.label.is_some()).count();
        let n_words = t.rows.iter().map(Vec::len).sum::<usize>();
        if n_labeled != 0 && n_labeled != n_words {
            return Err(Error::Parse(format!("table {}: labels present on only some words", t.id)));
        }
        let mut rows = Vec::with_capacity(t.rows.len());
        let mut labels = Vec::with_capacity(t.rows.len());
        for (r, row) in t.rows.into_iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Parse(format!("table {}: row {r} is empty", t.id)));
            }
            let mut words = Vec::with_capacity(row.len());
            let mut lab = Vec::with_capacity(row.len());
            for (i, w) in row.into_iter().enumerate() {
                let bbox = BBox::try_new(w.left, w.top, w.width, w.height)
                    .ok_or_else(|| Error::Parse(format!("table {}: zero-sized word box", t.id)))?;
                lab.push(w.label.unwrap_or(0));
                words.push(WordRecord {
                    text: w.text,
                    bbox,
                    conf: w.conf.unwrap_or(100.0),
                    page: 1,
                    block: 1,
                    par: 1,
                    line: r as u32 + 1,
                    word: i as u32 + 1,
                    tag: w.tag,
                });
            }
            rows.push(words);
            labels.push(lab);
        }
        Ok(LabeledTable {
            id: t.id,
            words: TableWords { rows },
            labels: (n_labeled > 0).then_some(labels),
            true_cells: t.true_cells,
        })
    }
}

pub fn write_corpus<W: Write>(mut out: W, tables: &[LabeledTable]) -> Result<()> {
    for t in tables {
        serde_json::to_writer(&mut out, &t.to_corpus())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(input: R) -> Result<Vec<LabeledTable>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: CorpusTable = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("corpus line {}: {e}", lineno + 1)))?;
        out.push(LabeledTable::from_corpus(t)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LabeledTable {
        let mk = |t: &str, l: u32, line: u32, word: u32| WordRecord {
            line,
            word,
            block: 1,
            par: 1,
            ..WordRecord::simple(t, BBox::new(l, line * 20, 30, 12))
        };
        LabeledTable {
            id: "t1".into(),
            words: TableWords {
                rows: vec![vec![mk("Trade", 0, 1, 1), mk("payables", 40, 1, 2), mk("7,857,686", 200, 1, 3)]],
            },
            labels: Some(vec![vec![0, 1, 1]]),
            true_cells: Some(2),
        }
    }

    #[test]
    fn roundtrip() {
        let t = sample();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &[t.clone(), t.clone()]).unwrap();
        let back = read_corpus(&buf[..]).unwrap();
        assert_eq!(back, vec![t.clone(), t]);
    }

    #[test]
    fn version_checked() {
        let mut c = sample().to_corpus();
        c.format_version = 9;
        let line = serde_json::to_string(&c).unwrap();
        assert!(read_corpus(line.as_bytes()).is_err());
    }

    #[test]
    fn partial_labels_rejected() {
        let mut c = sample().to_corpus();
        c.rows[0][1].label = None;
        assert!(LabeledTable::from_corpus(c).is_err());
    }

    #[test]
    fn cell_count_from_labels() {
        let mut t = sample();
        t.true_cells = None;
        assert_eq!(t.true_cell_count(), Some(2));
    }
}
