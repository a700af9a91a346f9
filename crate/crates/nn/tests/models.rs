mod common;

use common::random_table;
use proptest::prelude::*;
use tabext_core::ingest::FeaturizedTable;
use tabext_nn::{build_model, load_weights, load_weights_for, save_weights, ModelConfig, NnError, Variant};

#[test]
fn parameter_counts() {
    let want = [
        (Variant::Unsup, 0),
        (Variant::FfSpatial, 2_769),
        (Variant::FfToken, 16_801),
        (Variant::FfBoth, 17_393),
        (Variant::LstmRow, 27_025),
        (Variant::LstmLocal, 27_025),
        (Variant::LstmSwap, 27_025),
        (Variant::LstmGlobal, 27_025),
        (Variant::TrRow, 27_153),
        (Variant::TrGlobal, 27_153),
        (Variant::TrRec, 35_761),
    ];
    for (v, n) in want {
        assert_eq!(build_model(ModelConfig::new(v), 1).unwrap().param_count(), n, "{v}");
    }
}

#[test]
fn counts_are_enforced() {
    let cfg = ModelConfig { vocab_size: 500, ..ModelConfig::new(Variant::FfToken) };
    assert!(matches!(build_model(cfg, 0), Err(NnError::ParamCount { .. })));
    let cfg = ModelConfig { heads: 5, ..ModelConfig::new(Variant::TrRow) };
    assert!(matches!(build_model(cfg, 0), Err(NnError::Config(_))));
    // head count does not change the count
    let cfg = ModelConfig { heads: 8, ..ModelConfig::new(Variant::TrRec) };
    assert_eq!(build_model(cfg, 0).unwrap().param_count(), 35_761);
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        assert_eq!(v.name().to_lowercase().parse::<Variant>().unwrap(), v);
    }
    assert!("lstm".parse::<Variant>().is_err());
}

#[test]
fn unsup_is_all_ones() {
    let m = build_model(ModelConfig::new(Variant::Unsup), 0).unwrap();
    let t = random_table(3, 4, 5);
    assert_eq!(m.forward(&t).unwrap(), vec![1.0; t.token_count()]);
}

#[test]
fn outputs_are_probabilities() {
    let t = random_table(9, 4, 6);
    for v in Variant::ALL.into_iter().filter(|v| v.is_trainable()) {
        let p = build_model(ModelConfig::new(v), 2).unwrap().forward(&t).unwrap();
        assert_eq!(p.len(), t.token_count(), "{v}");
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0), "{v}");
    }
}

#[test]
fn initialization_is_seeded() {
    let a = build_model(ModelConfig::new(Variant::LstmLocal), 4).unwrap();
    assert_eq!(a, build_model(ModelConfig::new(Variant::LstmLocal), 4).unwrap());
    assert_ne!(a, build_model(ModelConfig::new(Variant::LstmLocal), 5).unwrap());
}

#[test]
fn out_of_vocabulary_ids_are_rejected() {
    let mut t = random_table(1, 2, 3);
    t.rows[0][0].tag_id = 882;
    let m = build_model(ModelConfig::new(Variant::FfToken), 0).unwrap();
    assert!(matches!(m.forward(&t), Err(NnError::TokenId { .. })));
    // spatial-only models never look at ids
    assert!(build_model(ModelConfig::new(Variant::FfSpatial), 0).unwrap().forward(&t).is_ok());
}

#[test]
fn constant_half_logits_give_ln2() {
    let mut m = build_model(ModelConfig::new(Variant::FfSpatial), 0).unwrap();
    let idx = m.params().index("head.w").unwrap();
    m.params_mut().tensors_mut()[idx].data_mut().fill(0.0);
    let idx = m.params().index("head.b").unwrap();
    m.params_mut().tensors_mut()[idx].data_mut().fill(0.0);
    let loss = m.loss(&random_table(5, 3, 4)).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn confident_correct_logits_give_near_zero_loss() {
    let mut t = random_table(6, 3, 4);
    for row in &mut t.rows {
        for tok in row.iter_mut() {
            tok.label = Some(1);
        }
    }
    let mut m = build_model(ModelConfig::new(Variant::FfSpatial), 0).unwrap();
    let idx = m.params().index("head.w").unwrap();
    m.params_mut().tensors_mut()[idx].data_mut().fill(0.0);
    let idx = m.params().index("head.b").unwrap();
    m.params_mut().tensors_mut()[idx].data_mut().fill(40.0);
    assert!(m.loss(&t).unwrap() < 1e-15);
}

#[test]
fn unlabeled_tables_cannot_be_scored() {
    let mut t = random_table(2, 2, 2);
    t.rows[1][0].label = None;
    let m = build_model(ModelConfig::new(Variant::FfBoth), 0).unwrap();
    assert!(matches!(m.loss_and_grad(&t), Err(NnError::MissingLabels)));
}

fn with_first_row(t: &FeaturizedTable, row: Vec<tabext_core::ingest::TokenFeatures>) -> FeaturizedTable {
    let mut out = t.clone();
    out.rows[0] = row;
    out
}

/// Two tables share their second row but differ in the first: only models
/// that carry context across rows see a different second row.
#[test]
fn cross_row_context_witness() {
    let base = random_table(21, 2, 4);
    let other = with_first_row(&base, random_table(22, 1, 4).rows.remove(0));
    let n0 = (base.rows[0].len(), other.rows[0].len());
    for v in Variant::ALL.into_iter().filter(|v| v.is_trainable()) {
        let m = build_model(ModelConfig::new(v), 3).unwrap();
        let a = m.forward(&base).unwrap();
        let b = m.forward(&other).unwrap();
        let same = a[n0.0..] == b[n0.1..];
        let contextual = matches!(
            v,
            Variant::LstmLocal | Variant::LstmSwap | Variant::LstmGlobal | Variant::TrGlobal | Variant::TrRec
        );
        assert_eq!(!same, contextual, "{v}");
    }
}

#[test]
fn local_and_swap_differ() {
    let t = random_table(30, 3, 4);
    let local = build_model(ModelConfig::new(Variant::LstmLocal), 8).unwrap();
    let swap = build_model(ModelConfig::new(Variant::LstmSwap), 8).unwrap();
    assert_eq!(local.params(), swap.params());
    assert_ne!(local.forward(&t).unwrap(), swap.forward(&t).unwrap());
    // Without cell propagation the chained states still carry context.
    let cfg = ModelConfig { propagate_cell: false, ..ModelConfig::new(Variant::LstmSwap) };
    let no_cell = build_model(cfg, 8).unwrap();
    assert_ne!(no_cell.forward(&t).unwrap(), swap.forward(&t).unwrap());
}

#[test]
fn weights_round_trip() {
    let t = random_table(4, 3, 5);
    for v in Variant::ALL {
        let m = build_model(ModelConfig::new(v), 11).unwrap();
        let mut buf = Vec::new();
        save_weights(&m, &mut buf).unwrap();
        let back = load_weights(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.forward(&t).unwrap(), m.forward(&t).unwrap());
        let bits: Vec<u64> = back.forward(&t).unwrap().iter().map(|x| x.to_bits()).collect();
        let want: Vec<u64> = m.forward(&t).unwrap().iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits, want);
    }
}

#[test]
fn weight_file_errors() {
    let m = build_model(ModelConfig::new(Variant::LstmLocal), 1).unwrap();
    let mut buf = Vec::new();
    save_weights(&m, &mut buf).unwrap();
    for cut in [0, 3, 8, 40, buf.len() - 1] {
        assert!(load_weights(&buf[..cut]).is_err(), "cut {cut}");
    }
    let mut extra = buf.clone();
    extra.push(0);
    assert!(load_weights(extra.as_slice()).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(load_weights(bad.as_slice()).is_err());
    let mut version = buf.clone();
    version[4] = 9;
    assert!(load_weights(version.as_slice()).is_err());
    assert!(matches!(load_weights_for(buf.as_slice(), Variant::LstmRow), Err(NnError::Config(_))));
    assert!(load_weights_for(buf.as_slice(), Variant::LstmLocal).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Row-wise models score each row on its own, so shuffling rows shuffles outputs.
    #[test]
    fn row_models_are_permutation_equivariant(seed in 0u64..1000, rot in 1usize..4) {
        let t = random_table(seed, 4, 5);
        let mut perm = t.clone();
        perm.rows.rotate_left(rot);
        for v in [Variant::LstmRow, Variant::TrRow, Variant::FfBoth] {
            let m = build_model(ModelConfig::new(v), seed).unwrap();
            let a = m.forward(&t).unwrap();
            let b = m.forward(&perm).unwrap();
            let mut chunks: Vec<&[f64]> = Vec::new();
            let mut off = 0;
            for r in &t.rows {
                chunks.push(&a[off..off + r.len()]);
                off += r.len();
            }
            chunks.rotate_left(rot);
            let expect: Vec<f64> = chunks.concat();
            prop_assert_eq!(b, expect);
        }
    }

    #[test]
    fn sigmoid_head_is_monotone(b1 in -5.0f64..5.0, b2 in -5.0f64..5.0) {
        let t = random_table(1, 2, 3);
        let mut m = build_model(ModelConfig::new(Variant::FfSpatial), 0).unwrap();
        let idx = m.params().index("head.b").unwrap();
        m.params_mut().tensors_mut()[idx].data_mut()[0] = b1;
        let p1 = m.forward(&t).unwrap();
        m.params_mut().tensors_mut()[idx].data_mut()[0] = b2;
        let p2 = m.forward(&t).unwrap();
        for (x, y) in p1.iter().zip(&p2) {
            prop_assert_eq!(b1 <= b2, x <= y);
        }
    }
}
