use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;
use tabext_cli::{run, PipelineConfig};
use tabext_nn::{build_model, save_weights, ModelConfig, Variant};

fn tabext(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabext")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = tabext(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

const TSV: &str = "level\tpage_num\tblock_num\tpar_num\tline_num\tword_num\tleft\ttop\twidth\theight\tconf\ttext\n\
5\t1\t1\t1\t1\t1\t10\t10\t50\t20\t96\tTrade\n\
5\t1\t1\t1\t1\t2\t70\t10\t80\t20\t91\tpayables\n\
5\t1\t1\t1\t1\t3\t300\t10\t90\t20\t88\t7,857,686\n\
5\t1\t1\t1\t2\t1\t10\t50\t50\t20\t95\tOther\n\
5\t1\t1\t1\t2\t2\t300\t50\t90\t20\t12\tjunk\n";

#[test]
fn exit_codes_for_bad_usage() {
    assert_eq!(run(["tabext", "bogus"]), 1);
    assert_eq!(run(["tabext", "synth", "--no-such-flag"]), 1);
    assert_eq!(run(["tabext", "prep", "--image", "x.pgm", "--angle", "45"]), 1);
    assert_eq!(run(["tabext", "prep", "--image", "x.pgm", "--roi", "1,2,3"]), 1);
    assert_eq!(run(["tabext", "align", "--tsv", "/nonexistent/words.tsv"]), 1);
    assert_eq!(run(["tabext", "detect-post", "--mask", "a.pgm", "--tune"]), 1);
    assert_eq!(run(["tabext", "--help"]), 0);
}

#[test]
fn invalid_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "thresold = 0.5\n").unwrap();
    let out = tabext(dir.path(), &["--config", "bad.cfg", "synth", "--tables", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("thresold"));
    assert!(out.stdout.is_empty());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "seed = 5\n").unwrap();
    let from_file = ok(d, &["--config", "run.cfg", "synth", "--tables", "3"]);
    let from_flag = ok(d, &["--config", "run.cfg", "synth", "--tables", "3", "--seed", "6"]);
    assert_eq!(from_file, ok(d, &["synth", "--tables", "3", "--seed", "5"]));
    assert_eq!(from_flag, ok(d, &["synth", "--tables", "3", "--seed", "6"]));
    assert_ne!(from_file, from_flag);
}

#[test]
fn config_threshold_reaches_detect_post() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--tables", "1", "--mask-dir", "m", "--pages", "1", "--out", "t.ndjson"]);
    // Blobs sit at 0.9, so a cut above that finds nothing.
    std::fs::write(d.join("high.cfg"), "threshold = 0.95\n").unwrap();
    let empty = ok(d, &["--config", "high.cfg", "detect-post", "--mask", "m/page0001.pgm"]);
    assert_eq!(String::from_utf8(empty).unwrap(), "page,left,top,width,height\n");
    let found = ok(d, &["--config", "high.cfg", "detect-post", "--mask", "m/page0001.pgm", "--threshold", "0.5"]);
    assert_eq!(found, std::fs::read(d.join("m/boxes.csv")).unwrap());
}

#[test]
fn align_without_model_splits_every_word() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("w.tsv"), TSV).unwrap();
    let csv = String::from_utf8(ok(d, &["align", "--tsv", "w.tsv"])).unwrap();
    assert_eq!(csv, "Trade,payables,\"7,857,686\"\nOther,,\n");
    let latex = String::from_utf8(ok(d, &["align", "--tsv", "w.tsv", "--out", "latex", "--min-conf", "0"])).unwrap();
    assert!(latex.contains("junk"), "{latex}");
    let json = ok(d, &["align", "--tsv", "w.tsv", "--tsv", "w.tsv", "--out", "json"]);
    let v: Vec<tabext_core::align::TableGrid> = serde_json::from_slice(&json).unwrap();
    assert_eq!(v.len(), 2);
}

#[test]
fn overflowing_model_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("w.tsv"), TSV).unwrap();
    let mut model = build_model(ModelConfig::new(Variant::FfBoth), 0).unwrap();
    for t in model.params_mut().tensors_mut() {
        t.data_mut().fill(1e300);
    }
    let mut bytes = Vec::new();
    save_weights(&model, &mut bytes).unwrap();
    std::fs::write(d.join("big.wts"), bytes).unwrap();
    ok(d, &["synth", "--tables", "5", "--out", "c.ndjson"]);
    ok(d, &["train", "--variant", "ff_both", "--corpus", "c.ndjson", "--val", "c.ndjson", "--updates", "1", "--out", "m.wts"]);
    let out = tabext(d, &["align", "--tsv", "w.tsv", "--model", "big.wts", "--vocab", "m.wts.vocab"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // A model without its vocabulary is a usage error.
    assert_eq!(tabext(d, &["align", "--tsv", "w.tsv", "--model", "m.wts"]).status.code(), Some(1));
}

#[test]
fn train_rejects_unlabeled_corpus_and_unsup() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("u.ndjson"),
        "{\"format_version\":1,\"id\":\"u\",\"rows\":[[{\"text\":\"a\",\"left\":0,\"top\":0,\"width\":5,\"height\":5}]]}\n",
    )
    .unwrap();
    let args = ["train", "--variant", "lstm_row", "--corpus", "u.ndjson", "--val", "u.ndjson", "--out", "m.wts"];
    assert_eq!(tabext(d, &args).status.code(), Some(1));
    let args = ["train", "--variant", "unsup", "--corpus", "u.ndjson", "--val", "u.ndjson", "--out", "m.wts"];
    assert_eq!(tabext(d, &args).status.code(), Some(1));
}

#[test]
fn eval_scores_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--tables", "20", "--seed", "3", "--out", "c.ndjson"]);
    let gold = String::from_utf8(ok(d, &["eval", "--corpus", "c.ndjson", "--pred", "c.ndjson"])).unwrap();
    let row = gold.lines().nth(1).unwrap();
    assert_eq!(row, "PRED,0,0.00,0.00,0.00,0.00,0.00,0.00,100.00,1.0000");
    let unsup = String::from_utf8(ok(d, &["eval", "--corpus", "c.ndjson"])).unwrap();
    assert!(unsup.lines().nth(1).unwrap().starts_with("UNSUP,0,"));
}

#[test]
fn prep_rotates_and_pads() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--tables", "1", "--raster-dir", "r", "--out", "c.ndjson"]);
    ok(d, &["prep", "--image", "r/table0001.pgm", "--roi", "0,0,120,60", "--pad", "3", "--angle", "90", "--out", "p.pgm"]);
    let img = tabext_core::GrayImage::read_pgm(std::io::BufReader::new(std::fs::File::open(d.join("p.pgm")).unwrap())).unwrap();
    assert_eq!((img.width(), img.height()), (66, 126));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(
        threshold in 0.0f64..=1.0,
        pad in 0u32..100,
        min_conf in 0.0f64..=100.0,
        updates in 1usize..5000,
        seed in any::<u64>(),
        jobs in 1usize..16,
    ) {
        let text = format!(
            "# generated\nthreshold = {threshold}\npad = {pad}\nmin_conf = {min_conf}\nupdates = {updates}\nseed = {seed}\njobs = {jobs}\n"
        );
        let cfg = PipelineConfig::parse(&text).unwrap();
        let want = PipelineConfig { threshold, pad, min_conf, updates, seed, jobs, ..PipelineConfig::default() };
        prop_assert_eq!(cfg, want);
    }
}
