#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabext_core::ingest::{
    build_vocab, featurize_table, CharClassTagger, FeaturizedTable, LabeledTable, SpatialFeatures, TableWords, TokenFeatures,
    Vocab, VocabParams,
};

/// Random features with consistent activity flags and labels ending each row on 1.
pub fn random_table(seed: u64, rows: usize, max_len: usize) -> FeaturizedTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..rows)
        .map(|_| {
            let n = rng.gen_range(1..=max_len);
            (0..n)
                .map(|i| {
                    let mut s = SpatialFeatures { values: [0.0; 4], active: [false; 4] };
                    if i + 1 < n {
                        s.values[0] = rng.gen_range(0.0..0.5);
                        s.active[0] = true;
                    } else {
                        s.values[3] = 1.0;
                        s.active[3] = true;
                    }
                    if i > 0 {
                        s.values[1] = rng.gen_range(0.0..0.5);
                        s.active[1] = true;
                    } else {
                        s.values[2] = 1.0;
                        s.active[2] = true;
                    }
                    let label = if i + 1 == n { 1 } else { rng.gen_range(0..=1) };
                    TokenFeatures { tag_id: rng.gen_range(0..882), spatial: s, label: Some(label) }
                })
                .collect()
        })
        .collect();
    FeaturizedTable { rows }
}

pub fn vocab_for(tables: &[LabeledTable]) -> Vocab {
    let words: Vec<TableWords> = tables.iter().map(|t| t.words.clone()).collect();
    build_vocab(&words, &CharClassTagger, VocabParams::default()).unwrap()
}

pub fn featurize(tables: &[LabeledTable], vocab: &Vocab) -> Vec<FeaturizedTable> {
    tables
        .iter()
        .map(|t| featurize_table(&t.words, vocab, &CharClassTagger, t.labels.as_deref()).unwrap())
        .collect()
}
