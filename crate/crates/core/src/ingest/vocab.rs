//! Two-stage token vocabulary: frequent tokens keep their identity, the rest
//! fall back to a combined character-class tag, and rare or long tags
//! collapse to UNK.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geom::WordRecord;
use crate::ingest::TableWords;

pub const UNK_ID: u32 = 0;
const HEADER_MAGIC: &str = "#tabext-vocab v1";

/// Maps a token to its combined tag: pieces joined by `-`.
pub trait Tagger {
    fn tag(&self, token: &str) -> String;
}

/// Tags each maximal run of one character class: letters `X`, numbers `NUM`,
/// punctuation `PUNCT`, symbols `SYM`. A `,` or `.` between two digits stays
/// inside the number, so `(1,234.50)` is `PUNCT-NUM-PUNCT`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharClassTagger;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Digit,
    Punct,
    Sym,
}

impl CharClass {
    fn of(c: char) -> Self {
        if c.is_ascii_digit() {
            CharClass::Digit
        } else if c.is_alphabetic() {
            CharClass::Letter
        } else if ".,;:!?'\"()[]{}-/\\_\u{2018}\u{2019}\u{201c}\u{201d}\u{2013}\u{2014}".contains(c) {
            CharClass::Punct
        } else {
            CharClass::Sym
        }
    }

    fn name(self) -> &'static str {
        match self {
            CharClass::Letter => "X",
            CharClass::Digit => "NUM",
            CharClass::Punct => "PUNCT",
            CharClass::Sym => "SYM",
        }
    }
}

impl Tagger for CharClassTagger {
    fn tag(&self, token: &str) -> String {
        let chars: Vec<char> = token.chars().collect();
        let mut pieces: Vec<&str> = Vec::new();
        let mut prev: Option<CharClass> = None;
        for (i, &c) in chars.iter().enumerate() {
            let mut class = CharClass::of(c);
            let inside_number = matches!(c, ',' | '.')
                && prev == Some(CharClass::Digit)
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            if inside_number {
                class = CharClass::Digit;
            }
            if prev != Some(class) {
                pieces.push(class.name());
            }
            prev = Some(class);
        }
        pieces.join("-")
    }
}

fn tag_len(tag: &str) -> usize {
    tag.split('-').count()
}

fn resolve_tag(word: &WordRecord, tagger: &dyn Tagger) -> String {
    word.tag.clone().unwrap_or_else(|| tagger.tag(&word.text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabParams {
    /// A token is kept when its corpus count exceeds this.
    pub token_over: usize,
    /// A fallback tag is kept when its count exceeds this...
    pub tag_over: usize,
    /// ...and it has at most this many pieces.
    pub max_tag_len: usize,
    /// Total id budget including UNK; least frequent tokens are dropped first.
    pub capacity: Option<usize>,
}

impl Default for VocabParams {
    fn default() -> Self {
        Self { token_over: 75, tag_over: 20, max_tag_len: 7, capacity: Some(882) }
    }
}

/// Frozen id assignment. Id 0 is UNK, then tokens, then tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    tags: Vec<String>,
    token_ids: HashMap<String, u32>,
    tag_ids: HashMap<String, u32>,
    params: VocabParams,
}

impl Vocab {
    fn from_lists(tokens: Vec<String>, tags: Vec<String>, params: VocabParams) -> Self {
        let token_ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32 + 1)).collect();
        let base = tokens.len() as u32 + 1;
        let tag_ids = tags.iter().enumerate().map(|(i, t)| (t.clone(), base + i as u32)).collect();
        Self { tokens, tags, token_ids, tag_ids, params }
    }

    /// Number of ids including UNK.
    pub fn len(&self) -> usize {
        1 + self.tokens.len() + self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn params(&self) -> VocabParams {
        self.params
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_ids.get(token).copied()
    }

    pub fn tag_id(&self, tag: &str) -> Option<u32> {
        self.tag_ids.get(tag).copied()
    }

    /// Token identity first, then its tag, else UNK.
    pub fn lookup(&self, word: &WordRecord, tagger: &dyn Tagger) -> u32 {
        if let Some(id) = self.token_id(&word.text) {
            return id;
        }
        let tag = resolve_tag(word, tagger);
        if tag_len(&tag) > self.params.max_tag_len {
            return UNK_ID;
        }
        self.tag_id(&tag).unwrap_or(UNK_ID)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let p = self.params;
        let cap = p.capacity.map_or("none".to_string(), |c| c.to_string());
        writeln!(
            out,
            "{HEADER_MAGIC} token_over={} tag_over={} max_tag_len={} capacity={cap}",
            p.token_over, p.tag_over, p.max_tag_len
        )?;
        writeln!(out, "[tokens]")?;
        for t in &self.tokens {
            writeln!(out, "{t}\t{}", self.token_ids[t])?;
        }
        writeln!(out, "[tags]")?;
        for t in &self.tags {
            writeln!(out, "{t}\t{}", self.tag_ids[t])?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(Error::EmptyInput("vocab file"))??;
        let rest = header
            .strip_prefix(HEADER_MAGIC)
            .ok_or_else(|| Error::Parse("not a vocab file".into()))?;
        let kv: HashMap<&str, &str> = rest.split_whitespace().filter_map(|f| f.split_once('=')).collect();
        let field = |k: &str| -> Result<usize> {
            kv.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse(format!("vocab header lacks {k}")))
        };
        let capacity = match kv.get("capacity") {
            Some(&"none") => None,
            Some(v) => Some(v.parse().map_err(|_| Error::Parse("bad capacity".into()))?),
            None => return Err(Error::Parse("vocab header lacks capacity".into())),
        };
        let params = VocabParams {
            token_over: field("token_over")?,
            tag_over: field("tag_over")?,
            max_tag_len: field("max_tag_len")?,
            capacity,
        };
        let (mut tokens, mut tags) = (Vec::new(), Vec::new());
        let mut section: Option<&mut Vec<String>> = None;
        let mut expected_id = 1u32;
        for line in lines {
            let line = line?;
            match line.as_str() {
                "[tokens]" => section = Some(&mut tokens),
                "[tags]" => section = Some(&mut tags),
                _ => {
                    let (name, id) = line
                        .rsplit_once('\t')
                        .ok_or_else(|| Error::Parse(format!("bad vocab line {line:?}")))?;
                    let id: u32 = id.parse().map_err(|_| Error::Parse(format!("bad vocab id in {line:?}")))?;
                    if id != expected_id {
                        return Err(Error::Parse(format!("vocab ids not dense at {line:?}")));
                    }
                    expected_id += 1;
                    section
                        .as_mut()
                        .ok_or_else(|| Error::Parse("vocab entry outside a section".into()))?
                        .push(name.to_string());
                }
            }
        }
        Ok(Self::from_lists(tokens, tags, params))
    }
}

fn sorted_by_count(counts: impl Iterator<Item = (String, usize)>) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = counts.collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Builds the vocabulary from corpus-wide counts; ordering is frequency
/// descending, then lexicographic.
pub fn build_vocab(corpus: &[TableWords], tagger: &dyn Tagger, params: VocabParams) -> Result<Vocab> {
    if corpus.iter().all(|t| t.token_count() == 0) {
        return Err(Error::EmptyInput("vocabulary corpus"));
    }
    // token -> (count, tag); the first precomputed tag seen wins.
    let mut stats: BTreeMap<&str, (usize, String)> = BTreeMap::new();
    for w in corpus.iter().flat_map(TableWords::words) {
        if w.text.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!("token {:?} contains a tab or newline", w.text)));
        }
        stats
            .entry(w.text.as_str())
            .or_insert_with(|| (0, resolve_tag(w, tagger)))
            .0 += 1;
    }
    let mut tokens: Vec<String> = sorted_by_count(
        stats.iter().filter(|(_, (c, _))| *c > params.token_over).map(|(t, (c, _))| (t.to_string(), *c)),
    )
    .into_iter()
    .map(|(t, _)| t)
    .collect();

    loop {
        let mut tag_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let kept: std::collections::HashSet<&str> = tokens.iter().map(String::as_str).collect();
        for (tok, (count, tag)) in &stats {
            if !kept.contains(tok) && tag_len(tag) <= params.max_tag_len {
                *tag_counts.entry(tag.as_str()).or_default() += count;
            }
        }
        let tags: Vec<String> = sorted_by_count(
            tag_counts.into_iter().filter(|(_, c)| *c > params.tag_over).map(|(t, c)| (t.to_string(), c)),
        )
        .into_iter()
        .map(|(t, _)| t)
        .collect();
        let total = 1 + tokens.len() + tags.len();
        match params.capacity {
            Some(cap) if total > cap => {
                if tokens.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "{} tags alone exceed the vocabulary capacity {cap}",
                        tags.len()
                    )));
                }
                let excess = (total - cap).min(tokens.len());
                tokens.truncate(tokens.len() - excess);
            }
            _ => return Ok(Vocab::from_lists(tokens, tags, params)),
        }
    }
}
