use std::collections::HashMap;
use std::io::{BufRead, Write};

use log::warn;

use crate::error::{Error, Result};
use crate::geom::{BBox, WordRecord};

const COLUMNS: [&str; 12] = [
    "level", "page_num", "block_num", "par_num", "line_num", "word_num", "left", "top", "width",
    "height", "conf", "text",
];
const WORD_LEVEL: u32 = 5;

#[derive(Debug, Clone, Default)]
pub struct TsvParse {
    pub words: Vec<WordRecord>,
    /// Rows that could not be parsed.
    pub malformed: usize,
}

/// Parses OCR `tsv` output. Only word-level rows with non-empty text become
/// records; page/block/paragraph/line rows (conf -1) are skipped.
pub fn parse_tsv<R: BufRead>(input: R) -> Result<TsvParse> {
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::EmptyInput("tsv stream has no header")),
    };
    let names: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let col = COLUMNS
        .iter()
        .map(|c| index.get(c).copied().ok_or_else(|| Error::Parse(format!("tsv header lacks column {c:?}"))))
        .collect::<Result<Vec<usize>>>()?;

    let mut out = TsvParse::default();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match parse_row(&fields, &col) {
            Ok(Some(w)) => out.words.push(w),
            Ok(None) => {}
            Err(msg) => {
                warn!("tsv line {}: {msg}", lineno + 2);
                out.malformed += 1;
            }
        }
    }
    Ok(out)
}

fn parse_row(fields: &[&str], col: &[usize]) -> std::result::Result<Option<WordRecord>, String> {
    let get = |i: usize| fields.get(col[i]).copied().ok_or_else(|| format!("missing {}", COLUMNS[i]));
    let num = |i: usize| -> std::result::Result<u32, String> {
        let f = get(i)?;
        f.trim().parse::<u32>().map_err(|_| format!("bad {} {f:?}", COLUMNS[i]))
    };
    let level = num(0)?;
    if level != WORD_LEVEL {
        return Ok(None);
    }
    let conf: f64 = get(10)?.trim().parse().map_err(|_| "bad conf".to_string())?;
    let text = get(11)?.trim();
    if conf < 0.0 || text.is_empty() {
        return Ok(None);
    }
    if conf > 100.0 {
        return Err(format!("conf {conf} above 100"));
    }
    let bbox = BBox::try_new(num(6)?, num(7)?, num(8)?, num(9)?).ok_or("zero-sized box")?;
    Ok(Some(WordRecord {
        text: text.to_string(),
        bbox,
        conf,
        page: num(1)?,
        block: num(2)?,
        par: num(3)?,
        line: num(4)?,
        word: num(5)?,
        tag: None,
    }))
}

/// Writes word-level rows in the same column layout `parse_tsv` reads.
pub fn write_tsv<W: Write>(mut out: W, words: &[WordRecord]) -> Result<()> {
    writeln!(out, "{}", COLUMNS.join("\t"))?;
    for w in words {
        writeln!(
            out,
            "{WORD_LEVEL}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            w.page, w.block, w.par, w.line, w.word, w.bbox.left, w.bbox.top, w.bbox.width, w.bbox.height, w.conf, w.text
        )?;
    }
    Ok(())
}
