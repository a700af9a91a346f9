//! OCR metadata ingest: TSV parsing, confidence filtering, row grouping,
//! vocabulary construction and featurization into model inputs.

mod corpus;
mod features;
mod tsv;
mod vocab;

pub use corpus::{read_corpus, write_corpus, CorpusTable, CorpusWord, LabeledTable, CORPUS_FORMAT_VERSION};
pub use features::{
    featurize_table, norm_len, spatial_features, FeaturizedTable, SpatialFeatures, TokenFeatures,
};
pub use tsv::{parse_tsv, write_tsv, TsvParse};
pub use vocab::{build_vocab, CharClassTagger, Tagger, Vocab, VocabParams, UNK_ID};

use std::collections::BTreeMap;

use crate::geom::WordRecord;

pub const DEFAULT_MIN_CONF: f64 = 30.0;

/// Rows of words, top to bottom; words within a row left to right.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableWords {
    pub rows: Vec<Vec<WordRecord>>,
}

impl TableWords {
    pub fn token_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn words(&self) -> impl Iterator<Item = &WordRecord> {
        self.rows.iter().flatten()
    }
}

pub fn filter_confidence(words: Vec<WordRecord>, min_conf: f64) -> Vec<WordRecord> {
    words.into_iter().filter(|w| w.conf >= min_conf).collect()
}

/// Groups words on `(page, block, par, line)`, then orders rows by their
/// topmost edge and words by left edge. Layout ids only roughly follow the
/// visual order, hence the re-sort.
pub fn group_rows(words: Vec<WordRecord>) -> TableWords {
    let mut keyed: BTreeMap<(u32, u32, u32, u32), Vec<WordRecord>> = BTreeMap::new();
    for w in words {
        keyed.entry((w.page, w.block, w.par, w.line)).or_default().push(w);
    }
    let mut rows: Vec<((u32, (u32, u32, u32, u32)), Vec<WordRecord>)> = keyed
        .into_iter()
        .map(|(key, mut row)| {
            row.sort_by_key(|w| (w.bbox.left, w.word));
            let top = row.iter().map(|w| w.bbox.top).min().unwrap_or(0);
            ((top, key), row)
        })
        .collect();
    rows.sort_by_key(|(k, _)| *k);
    TableWords { rows: rows.into_iter().map(|(_, r)| r).collect() }
}
