//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line and
//! enforces its own time limit. The tests take a shared lock so that no two
//! run at once and every timing is measured without contention.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabext_core::align::{align_table, AlignParams, DisjointSet};
use tabext_core::imgprep::{build_line_mask, otsu_threshold, remove_lines};
use tabext_core::ingest::{
    build_vocab, featurize_table, CharClassTagger, FeaturizedTable, LabeledTable, SpatialFeatures, TableWords,
    TokenFeatures, Vocab, VocabParams, DEFAULT_MIN_CONF,
};
use tabext_core::maskpost::{
    connected_regions, default_threshold_grid, detection_counts, mask_to_boxes, rectanglize, tune_threshold,
    BoolMask, DetectionCounts, MaskParams,
};
use tabext_core::metrics::{eval_alignment, mcc, smape};
use tabext_core::synth::{
    gen_corpus, gen_mask_page, render_raster, split_seed, Difficulty, MaskPageSpec, SynthSpec, SynthTable,
};
use tabext_core::{box_iou, interval_iou, BBox, GrayImage, Interval};
use tabext_nn::{build_model, evaluate_mcc, grad_check, predict_labels, train, ModelConfig, TrainOptions, Variant};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict line, then fails the test if either the check or the
/// time limit failed.
fn verdict(n: u32, name: &str, ok: bool, detail: &str, started: Instant, limit: Duration) {
    let elapsed = started.elapsed();
    let in_time = elapsed < limit;
    let pass = ok && in_time;
    // Written to the raw handle so the line shows up without --nocapture.
    let line = format!(
        "criterion {n} [{}] {name}: {detail} ({:.1}s of {}s)\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    std::io::stdout().write_all(line.as_bytes()).unwrap();
    assert!(ok, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded {limit:?}: took {elapsed:?}");
}

// ---------------------------------------------------------------- 1

#[test]
fn c1_parameter_counts() {
    let _g = serial();
    let t0 = Instant::now();
    let expected: [(&str, usize); 10] = [
        ("FF_SPATIAL", 2_769),
        ("FF_TOKEN", 16_801),
        ("FF_BOTH", 17_393),
        ("LSTM_ROW", 27_025),
        ("LSTM_LOCAL", 27_025),
        ("LSTM_SWAP", 27_025),
        ("LSTM_GLOBAL", 27_025),
        ("TR_ROW", 27_153),
        ("TR_GLOBAL", 27_153),
        ("TR_REC", 35_761),
    ];
    let mut mismatches = Vec::new();
    for (name, want) in expected {
        let v: Variant = name.parse().unwrap();
        let got = build_model(ModelConfig::new(v), 0).unwrap().param_count();
        if got != want {
            mismatches.push(format!("{name} {got} != {want}"));
        }
    }
    let detail = if mismatches.is_empty() { "10 variants exact".to_string() } else { mismatches.join("; ") };
    verdict(1, "parameter counts", mismatches.is_empty(), &detail, t0, Duration::from_secs(1));
}

// ---------------------------------------------------------------- 2

/// Three rows of one to four tokens, random ids and gaps, labels ending
/// each row on 1.
fn random_rows(seed: u64) -> FeaturizedTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..3)
        .map(|_| {
            let n = rng.gen_range(1..=4);
            (0..n)
                .map(|i| {
                    let mut s = SpatialFeatures { values: [0.0; 4], active: [false; 4] };
                    if i + 1 < n {
                        s.values[0] = rng.gen_range(0.0..0.6);
                        s.active[0] = true;
                    } else {
                        s.values[3] = 1.0;
                        s.active[3] = true;
                    }
                    if i > 0 {
                        s.values[1] = rng.gen_range(0.0..0.6);
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

/// Central differences are only a valid reference where the loss is smooth
/// across the probe, so tables whose ReLU inputs come this close to zero are
/// redrawn.
const KINK_MARGIN: f64 = 1e-3;

#[test]
fn c2_gradient_check() {
    let _g = serial();
    let t0 = Instant::now();
    let mut worst = (String::new(), 0.0f64);
    let mut checked = 0;
    let mut redrawn = 0;
    let mut complete = true;
    for (i, v) in Variant::ALL.into_iter().filter(|v| v.is_trainable()).enumerate() {
        let model = build_model(ModelConfig::new(v), 31 + i as u64).unwrap();
        let mut seed = 500 + 100 * i as u64;
        let table = loop {
            let t = random_rows(seed);
            if model.relu_margin(&t).unwrap() >= KINK_MARGIN {
                break t;
            }
            redrawn += 1;
            seed += 1;
        };
        let r = grad_check(&model, &table, 1e-5).unwrap();
        complete &= r.checked == model.param_count();
        checked += r.checked;
        if r.max_rel_err > worst.1 {
            worst = (format!("{v} {}[{}]", r.worst.0, r.worst.1), r.max_rel_err);
        }
    }
    let ok = complete && worst.1 < 1e-4;
    let detail = format!(
        "{checked} parameters, worst relative error {:.2e} at {} ({redrawn} tables redrawn for a ReLU input within {KINK_MARGIN:e} of its kink)",
        worst.1, worst.0
    );
    verdict(2, "autodiff vs central differences", ok, &detail, t0, Duration::from_secs(120));
}

// ---------------------------------------------------------------- 3

/// Quick-find with relabel-the-smaller-class unions.
struct QuickFind {
    label: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl QuickFind {
    fn new(n: usize) -> Self {
        Self { label: (0..n).collect(), members: (0..n).map(|i| vec![i]).collect() }
    }

    fn union(&mut self, a: usize, b: usize) {
        let (la, lb) = (self.label[a], self.label[b]);
        if la == lb {
            return;
        }
        let (keep, gone) = if self.members[la].len() >= self.members[lb].len() { (la, lb) } else { (lb, la) };
        let moved = std::mem::take(&mut self.members[gone]);
        for &m in &moved {
            self.label[m] = keep;
        }
        self.members[keep].extend(moved);
    }
}

fn dsu_scripts() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD5);
    for script in 0..1000 {
        let n = rng.gen_range(1..=2000usize);
        let ops = rng.gen_range(1..=10_000usize);
        let mut dsu = DisjointSet::with_len(n);
        let mut qf = QuickFind::new(n);
        for _ in 0..ops {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if rng.gen_bool(0.7) {
                dsu.union(a, b).unwrap();
                qf.union(a, b);
            } else {
                let same = dsu.find(a).unwrap() == dsu.find(b).unwrap();
                if same != (qf.label[a] == qf.label[b]) {
                    return Err(format!("script {script}: query ({a},{b}) disagrees"));
                }
            }
        }
        // Root-to-label must be a bijection.
        let mut fwd: HashMap<usize, usize> = HashMap::new();
        let mut back: HashMap<usize, usize> = HashMap::new();
        for i in 0..n {
            let r = dsu.find(i).unwrap();
            let l = qf.label[i];
            if *fwd.entry(r).or_insert(l) != l || *back.entry(l).or_insert(r) != r {
                return Err(format!("script {script}: partitions differ at {i}"));
            }
        }
    }
    Ok(())
}

/// Between-class variance compared exactly: for each cut the score is
/// `(N*S0 - n0*S)^2 / (n0*n1)`, kept as a fraction.
fn otsu_exhaustive(px: &[u8]) -> Option<u8> {
    let n = px.len() as u128;
    let s: u128 = px.iter().map(|&p| p as u128).sum();
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255u8 {
        let n0 = px.iter().filter(|&&p| p <= t).count() as u128;
        if n0 == 0 || n0 == n {
            continue;
        }
        let s0: u128 = px.iter().filter(|&&p| p <= t).map(|&p| p as u128).sum();
        let d = (n * s0).abs_diff(n0 * s);
        let (num, den) = (d * d, n0 * (n - n0));
        if best.map_or(true, |(_, bn, bd)| num * bd > bn * den) {
            best = Some((t, num, den));
        }
    }
    best.map(|b| b.0)
}

fn otsu_images() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0750);
    for i in 0..1000 {
        let (w, h) = (rng.gen_range(1..=48u32), rng.gen_range(1..=48u32));
        let kind = rng.gen_range(0..3);
        let px: Vec<u8> = (0..w * h)
            .map(|_| match kind {
                0 => rng.gen(),
                1 => {
                    if rng.gen_bool(0.4) {
                        rng.gen_range(0..80)
                    } else {
                        rng.gen_range(150..=255)
                    }
                }
                _ => [17u8, 18, 120, 240][rng.gen_range(0..4)],
            })
            .collect();
        let img = GrayImage::from_vec(w, h, px.clone()).unwrap();
        let got = otsu_threshold(&img).ok().map(|r| r.0);
        let want = otsu_exhaustive(&px);
        if got != want {
            return Err(format!("image {i}: otsu {got:?}, exhaustive {want:?}"));
        }
    }
    Ok(())
}

/// Breadth-first 8-connected labeling and a min/max scan per component.
fn scan_boxes(mask: &[bool], w: usize, h: usize) -> Vec<BBox> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let (mut l, mut t, mut r, mut b) = (usize::MAX, usize::MAX, 0, 0);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            l = l.min(x);
            r = r.max(x);
            t = t.min(y);
            b = b.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        out.push(BBox::new(l as u32, t as u32, (r - l + 1) as u32, (b - t + 1) as u32));
    }
    out
}

fn rectangles() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7EC7);
    for i in 0..1000 {
        let (w, h) = (rng.gen_range(1..=40usize), rng.gen_range(1..=40usize));
        let density = rng.gen_range(0.02..0.6);
        let cells: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(density)).collect();
        let mut mask = BoolMask::new(w as u32, h as u32);
        for (k, &c) in cells.iter().enumerate() {
            mask.set((k % w) as u32, (k / w) as u32, c);
        }
        let mut got: Vec<BBox> = connected_regions(&mask).iter().map(|r| rectanglize(r).unwrap()).collect();
        let mut want = scan_boxes(&cells, w, h);
        let key = |b: &BBox| (b.top, b.left, b.width, b.height);
        got.sort_by_key(key);
        want.sort_by_key(key);
        if got != want {
            return Err(format!("mask {i}: {} regions vs {} by scan", got.len(), want.len()));
        }
    }
    Ok(())
}

/// Rows of a box as 32-bit pixel masks.
fn bitmap(b: &BBox) -> [u32; 32] {
    let mut rows = [0u32; 32];
    let span = if b.width == 32 { u32::MAX } else { ((1u32 << b.width) - 1) << b.left };
    for row in rows.iter_mut().take(b.bottom() as usize).skip(b.top as usize) {
        *row = span;
    }
    rows
}

fn counted_iou(a: &BBox, b: &BBox) -> f64 {
    let (ma, mb) = (bitmap(a), bitmap(b));
    let inter: u64 = ma.iter().zip(&mb).map(|(x, y)| (x & y).count_ones() as u64).sum();
    let ua: u64 = ma.iter().map(|x| x.count_ones() as u64).sum();
    let ub: u64 = mb.iter().map(|x| x.count_ones() as u64).sum();
    inter as f64 / (ua + ub - inter) as f64
}

fn ious() -> Result<usize, String> {
    // Every half-open interval with endpoints in 0..=32.
    let intervals: Vec<(u32, u32)> = (0..32).flat_map(|lo| (lo + 1..=32).map(move |hi| (lo, hi))).collect();
    let mut compared = 0;
    for &(alo, ahi) in &intervals {
        for &(blo, bhi) in &intervals {
            let count = (alo.max(blo)..ahi.min(bhi)).count() as u64;
            let union = (ahi - alo) as u64 + (bhi - blo) as u64 - count;
            let want = count as f64 / union as f64;
            if interval_iou(Interval::new(alo, ahi), Interval::new(blo, bhi)) != want {
                return Err(format!("interval [{alo},{ahi}) vs [{blo},{bhi})"));
            }
            compared += 1;
        }
    }
    // Every pair of x-extents meets random y-extents and vice versa.
    let mut rng = ChaCha8Rng::seed_from_u64(0x10B);
    for axis in 0..2 {
        for &(alo, ahi) in &intervals {
            for &(blo, bhi) in &intervals {
                for _ in 0..2 {
                    let (clo, chi) = intervals[rng.gen_range(0..intervals.len())];
                    let (dlo, dhi) = intervals[rng.gen_range(0..intervals.len())];
                    let (a, b) = if axis == 0 {
                        (BBox::new(alo, clo, ahi - alo, chi - clo), BBox::new(blo, dlo, bhi - blo, dhi - dlo))
                    } else {
                        (BBox::new(clo, alo, chi - clo, ahi - alo), BBox::new(dlo, blo, dhi - dlo, bhi - blo))
                    };
                    if box_iou(&a, &b) != counted_iou(&a, &b) {
                        return Err(format!("box {a:?} vs {b:?}"));
                    }
                    compared += 1;
                }
            }
        }
    }
    Ok(compared)
}

#[test]
fn c3_oracle_equivalences() {
    let _g = serial();
    let t0 = Instant::now();
    let mut failures = Vec::new();
    if let Err(e) = dsu_scripts() {
        failures.push(format!("dsu: {e}"));
    }
    if let Err(e) = otsu_images() {
        failures.push(format!("otsu: {e}"));
    }
    if let Err(e) = rectangles() {
        failures.push(format!("rectanglize: {e}"));
    }
    let pairs = match ious() {
        Ok(n) => n,
        Err(e) => {
            failures.push(format!("iou: {e}"));
            0
        }
    };
    let detail = if failures.is_empty() {
        format!("1000 DSU scripts, 1000 Otsu images, 1000 component masks, {pairs} IOU pairs all exact")
    } else {
        failures.join("; ")
    };
    verdict(3, "oracle equivalences", failures.is_empty(), &detail, t0, Duration::from_secs(60));
}

// ---------------------------------------------------------------- 4

#[test]
fn c4_mask_pipeline() {
    let _g = serial();
    let t0 = Instant::now();
    let params = MaskParams::default();

    let mut counts = DetectionCounts::default();
    let (mut clean_masks, mut clean_truth) = (Vec::new(), Vec::new());
    for i in 0..200 {
        let spec = MaskPageSpec { adjacent: i % 2 == 1, ..MaskPageSpec::clean(split_seed(40, i)) };
        let page = gen_mask_page(&spec);
        counts.add(detection_counts(&mask_to_boxes(&page.mask, params), &page.boxes, 0.5));
        clean_masks.push(page.mask);
        clean_truth.push(page.boxes);
    }
    let pr = counts.scores();
    let (clean_t, _) = tune_threshold(&clean_masks, &clean_truth, &default_threshold_grid(), params.min_area_frac).unwrap();

    let cut = 0.7;
    let mut speckles = 0;
    let mut survivors = 0;
    let (mut masks, mut truth) = (Vec::new(), Vec::new());
    for i in 0..200 {
        let spec = MaskPageSpec::banded(split_seed(41, i), cut);
        let page = gen_mask_page(&spec);
        let boxes = mask_to_boxes(&page.mask, MaskParams { threshold: cut, ..params });
        speckles += page.speckles.len();
        survivors += page.speckles.iter().filter(|s| boxes.iter().any(|b| b.intersection_area(s) > 0)).count();
        masks.push(page.mask);
        truth.push(page.boxes);
    }
    let optimum = MaskPageSpec::banded(0, cut).optimum();
    let (t, score) = tune_threshold(&masks, &truth, &default_threshold_grid(), params.min_area_frac).unwrap();

    let clean_opt = MaskPageSpec::clean(0).optimum();
    let ok = pr.precision >= 0.98
        && pr.recall >= 0.98
        && speckles > 0
        && survivors == 0
        && t > optimum.0
        && t <= optimum.1
        && clean_t > clean_opt.0
        && clean_t <= clean_opt.1;
    let detail = format!(
        "clean P {:.4} R {:.4}; {survivors}/{speckles} speckles survive; tuned cut {t} (IOU {score:.4}) in ({:.2}, {:.2}]; clean tuned {clean_t}",
        pr.precision, pr.recall, optimum.0, optimum.1
    );
    verdict(4, "mask post-processing", ok, &detail, t0, Duration::from_secs(30));
}

// ---------------------------------------------------------------- 5

#[test]
fn c5_line_removal() {
    let _g = serial();
    let t0 = Instant::now();
    let tables = gen_corpus(&SynthSpec::preset(Difficulty::Noisy, 55), 100);
    let (mut rule_total, mut rule_white) = (0usize, 0usize);
    let (mut glyph_total, mut glyph_kept) = (0usize, 0usize);
    for (i, t) in tables.iter().enumerate() {
        let r = render_raster(t, true, split_seed(56, i as u64));
        let (_, binary) = otsu_threshold(&r.image).unwrap();
        let cleaned = remove_lines(&r.image, &build_line_mask(&binary)).unwrap();
        for y in 0..r.image.height() {
            for x in 0..r.image.width() {
                if r.rule_pixels.get(x, y) {
                    rule_total += 1;
                    rule_white += usize::from(cleaned.get(x, y) == 255);
                } else if r.glyph_pixels.get(x, y) {
                    glyph_total += 1;
                    glyph_kept += usize::from(cleaned.get(x, y) == r.image.get(x, y));
                }
            }
        }
    }
    let whitened = rule_white as f64 / rule_total as f64;
    let ok = rule_total > 0 && glyph_total > 0 && whitened >= 0.99 && glyph_kept == glyph_total;
    let detail = format!(
        "{:.4}% of {rule_total} rule pixels whitened; {glyph_kept}/{glyph_total} glyph pixels unchanged",
        100.0 * whitened
    );
    verdict(5, "line removal", ok, &detail, t0, Duration::from_secs(30));
}

// ---------------------------------------------------------------- 6

fn gold_probs(t: &LabeledTable) -> Vec<f64> {
    t.labels.as_ref().unwrap().iter().flatten().map(|&l| f64::from(l)).collect()
}

#[test]
fn c6_oracle_label_alignment() {
    let _g = serial();
    let t0 = Instant::now();
    let tables = gen_corpus(&SynthSpec::preset(Difficulty::Clean, 66), 500);
    let mut exact = 0;
    let mut counts = Vec::new();
    for t in &tables {
        let grid = align_table(&t.table.words, &gold_probs(&t.table), AlignParams::default()).unwrap();
        exact += usize::from(grid.texts() == t.grid);
        counts.push((grid.nonempty_cells(), t.true_cell_count()));
    }
    let report = eval_alignment(&counts, None).unwrap();
    let ok = exact == tables.len() && report.perfect_pct == 100.0 && report.median() == 0.0;
    let detail = format!(
        "{exact}/{} grids identical, {:.1}% perfect, median SMAPE {}",
        tables.len(),
        report.perfect_pct,
        report.median()
    );
    verdict(6, "gold-label alignment", ok, &detail, t0, Duration::from_secs(30));
}

// ---------------------------------------------------------------- 7

struct Split {
    train: Vec<FeaturizedTable>,
    val: Vec<FeaturizedTable>,
    val_tables: Vec<LabeledTable>,
    val_truth: Vec<usize>,
}

fn split(difficulty: Difficulty, n: usize, seeds: (u64, u64)) -> Split {
    let keep = |tables: Vec<SynthTable>| -> (Vec<LabeledTable>, Vec<usize>) {
        tables.iter().map(|t| (t.table.filter_confidence(DEFAULT_MIN_CONF), t.true_cell_count())).unzip()
    };
    let (train_tables, _) = keep(gen_corpus(&SynthSpec::preset(difficulty, seeds.0), n));
    let (val_tables, val_truth) = keep(gen_corpus(&SynthSpec::preset(difficulty, seeds.1), n));
    let words: Vec<TableWords> = train_tables.iter().map(|t| t.words.clone()).collect();
    let vocab = build_vocab(&words, &CharClassTagger, VocabParams::default()).unwrap();
    let feat = |ts: &[LabeledTable], v: &Vocab| -> Vec<FeaturizedTable> {
        ts.iter().map(|t| featurize_table(&t.words, v, &CharClassTagger, t.labels.as_deref()).unwrap()).collect()
    };
    Split { train: feat(&train_tables, &vocab), val: feat(&val_tables, &vocab), val_tables, val_truth }
}

/// Median SMAPE and % perfect of the aligned validation grids.
fn alignment(split: &Split, labels: &[Vec<u8>]) -> (f64, f64) {
    let counts: Vec<(usize, usize)> = split
        .val_tables
        .iter()
        .zip(labels)
        .zip(&split.val_truth)
        .map(|((t, l), &truth)| {
            let probs: Vec<f64> = l.iter().map(|&x| f64::from(x)).collect();
            (align_table(&t.words, &probs, AlignParams::default()).unwrap().nonempty_cells(), truth)
        })
        .collect();
    let r = eval_alignment(&counts, None).unwrap();
    (r.median(), r.perfect_pct)
}

#[test]
fn c7_training_efficacy() {
    let _g = serial();
    let t0 = Instant::now();

    let noisy = split(Difficulty::Noisy, 1519, (1, 2));
    let opts = TrainOptions { updates: 640, lr: 0.01, seed: 7, val_every: 16, cutoff: 0.5 };
    let local = train(build_model(ModelConfig::new(Variant::LstmLocal), 7).unwrap(), &noisy.train, &noisy.val, &opts)
        .unwrap();
    let val_mcc = evaluate_mcc(&local.model, &noisy.val, 0.5).unwrap();
    let (local_med, local_perf) = alignment(&noisy, &predict_labels(&local.model, &noisy.val, 0.5).unwrap());
    let ones: Vec<Vec<u8>> = noisy.val.iter().map(|t| vec![1; t.token_count()]).collect();
    let (unsup_med, unsup_perf) = alignment(&noisy, &ones);
    let supervised = val_mcc >= 0.8 && local_med < unsup_med && local_perf > unsup_perf;

    let context = split(Difficulty::Context, 400, (11, 12));
    let copts = TrainOptions { lr: 0.003, ..opts };
    let best = |v: Variant, seed: u64| {
        let opts = TrainOptions { seed, ..copts.clone() };
        train(build_model(ModelConfig::new(v), seed).unwrap(), &context.train, &context.val, &opts).unwrap().best_val_mcc
    };
    let pairs: Vec<(f64, f64)> = (1..=5).map(|s| (best(Variant::LstmLocal, s), best(Variant::LstmRow, s))).collect();
    let context_ok = pairs.iter().all(|(l, r)| l >= r);
    let ok = supervised && context_ok;
    let shown: Vec<String> = pairs.iter().map(|(l, r)| format!("{l:.3}/{r:.3}")).collect();
    let detail = format!(
        "noisy LSTM_LOCAL val MCC {val_mcc:.4} (best at update {}), median SMAPE {local_med:.2} vs UNSUP {unsup_med:.2}, \
         perfect {local_perf:.2}% vs {unsup_perf:.2}%; context best val MCC LSTM_LOCAL/LSTM_ROW over 5 seeds {}",
        local.best_update,
        shown.join(" ")
    );
    verdict(7, "training efficacy", ok, &detail, t0, Duration::from_secs(600));
}

// ---------------------------------------------------------------- 8

fn tabext(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_tabext")).args(args).current_dir(dir).output().unwrap();
    assert!(out.status.success(), "tabext {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

/// Runs every subcommand in `dir` and returns each step's stdout plus every
/// file left behind, keyed by name.
fn pipeline(dir: &Path, jobs: &str) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let j = ["--jobs", jobs];
    let mut step = |name: &str, args: &[&str]| -> Vec<u8> {
        let all: Vec<&str> = args.iter().chain(&j).copied().collect();
        let stdout = tabext(dir, &all);
        out.insert(format!("stdout:{name}"), stdout.clone());
        stdout
    };
    step(
        "synth-train",
        &["synth", "--seed", "5", "--tables", "40", "--difficulty", "noisy", "--out", "train.ndjson",
          "--tsv-dir", "tsv", "--raster-dir", "ras", "--mask-dir", "masks", "--pages", "6", "--cut", "0.7"],
    );
    let val = step("synth-val", &["synth", "--seed", "6", "--tables", "20", "--difficulty", "noisy"]);
    std::fs::write(dir.join("val.ndjson"), val).unwrap();
    let masks: Vec<String> = (1..=6).map(|i| format!("masks/page{i:04}.pgm")).collect();
    let mut detect = vec!["detect-post"];
    for m in &masks {
        detect.extend(["--mask", m.as_str()]);
    }
    detect.extend(["--truth", "masks/boxes.csv", "--tune", "--labels-dir", "labels", "--report", "report.csv"]);
    step("detect-post", &detect);
    step("prep", &["prep", "--image", "ras/table0001.pgm", "--out", "prep.pgm", "--line-mask", "lines.pgm"]);
    step("prep-roi", &["prep", "--image", "ras/table0002.pgm", "--roi", "0,0,150,90", "--angle", "90", "--pad", "4"]);
    step(
        "train",
        &["train", "--variant", "lstm_local", "--corpus", "train.ndjson", "--val", "val.ndjson", "--seed", "7",
          "--updates", "24", "--val-every", "8", "--out", "model.wts"],
    );
    let tsvs: Vec<String> = (1..=6).map(|i| format!("tsv/table{i:04}.tsv")).collect();
    for format in ["csv", "latex", "json"] {
        let mut align = vec!["align", "--model", "model.wts", "--vocab", "model.wts.vocab", "--out", format];
        for t in &tsvs {
            align.extend(["--tsv", t.as_str()]);
        }
        step(&format!("align-{format}"), &align);
    }
    step("eval-model", &["eval", "--corpus", "val.ndjson", "--model", "model.wts", "--vocab", "model.wts.vocab", "--per-table", "per_table.csv"]);
    step("eval-unsup", &["eval", "--corpus", "val.ndjson"]);
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for entry in std::fs::read_dir(dir.join(&rel)).unwrap() {
            let entry = entry.unwrap();
            let rel = rel.join(entry.file_name());
            if entry.file_type().unwrap().is_dir() {
                stack.push(rel);
            } else {
                out.insert(rel.display().to_string(), std::fs::read(dir.join(&rel)).unwrap());
            }
        }
    }
    out
}

#[test]
fn c8_cli_determinism() {
    let _g = serial();
    let t0 = Instant::now();
    let runs: Vec<(String, BTreeMap<String, Vec<u8>>)> = [("1", "a"), ("8", "b"), ("8", "c")]
        .into_iter()
        .map(|(jobs, _)| {
            let dir = tempfile::tempdir().unwrap();
            (jobs.to_string(), pipeline(dir.path(), jobs))
        })
        .collect();
    let base = &runs[0].1;
    let mut diffs = Vec::new();
    for (jobs, files) in &runs[1..] {
        if files.keys().ne(base.keys()) {
            diffs.push(format!("--jobs {jobs}: different file set"));
        }
        for (name, bytes) in files {
            if base.get(name) != Some(bytes) {
                diffs.push(format!("--jobs {jobs}: {name} differs"));
            }
        }
    }
    let nonempty = base.iter().filter(|(k, v)| !k.starts_with("stdout:") && !v.is_empty()).count();
    let ok = diffs.is_empty() && nonempty > 20;
    let detail = if diffs.is_empty() {
        format!("6 subcommands, {} outputs byte-identical across --jobs 1, 8, 8", base.len())
    } else {
        diffs.join("; ")
    };
    verdict(8, "CLI determinism", ok, &detail, t0, Duration::from_secs(600));
}

// ---------------------------------------------------------------- 9

#[test]
fn c9_metric_self_tests() {
    let _g = serial();
    let t0 = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    let check = |failures: &mut Vec<String>, what: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            failures.push(format!("{what}: {got} != {want}"));
        }
    };

    for a in 0..=150usize {
        for b in 0..=150usize {
            let s = smape(a, b);
            if !(0.0..=200.0).contains(&s) || s != smape(b, a) || (s == 0.0) != (a == b) {
                failures.push(format!("smape({a},{b}) = {s}"));
            }
        }
    }
    check(&mut failures, "smape(10,10)", smape(10, 10), 0.0);
    check(&mut failures, "smape(0,0)", smape(0, 0), 0.0);
    check(&mut failures, "smape(0,5)", smape(0, 5), 200.0);
    check(&mut failures, "smape(8,10)", smape(8, 10), 200.0 * 2.0 / 18.0);
    let single = eval_alignment(&[(8, 10)], None).unwrap();
    for q in single.quantiles {
        check(&mut failures, "quantile of (8,10)", q, 22.222_222_222_222_222);
    }

    let gold = [1u8, 0, 1, 1, 0, 0, 1];
    let inverted: Vec<u8> = gold.iter().map(|g| 1 - g).collect();
    check(&mut failures, "mcc perfect", mcc(&gold, &gold).unwrap(), 1.0);
    check(&mut failures, "mcc inverted", mcc(&inverted, &gold).unwrap(), -1.0);

    // TP=4, TN=3, FP=2, FN=1, evaluated from the confusion-matrix definition.
    let pred = [1u8, 1, 1, 1, 0, 0, 0, 1, 1, 0];
    let truth = [1u8, 1, 1, 1, 0, 0, 0, 0, 0, 1];
    let (tp, tn, fp, fn_) = (4.0f64, 3.0, 2.0, 1.0);
    let oracle = (tp * tn - fp * fn_) / ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    check(&mut failures, "mcc oracle", oracle, 0.408_248_290_463_862_96);
    check(&mut failures, "mcc 4/3/2/1", mcc(&pred, &truth).unwrap(), oracle);
    check(&mut failures, "mcc constant prediction", mcc(&[1, 1, 1], &[1, 0, 1]).unwrap(), 0.0);

    let ok = failures.is_empty();
    let detail = if ok {
        "smape bounds, symmetry, zero cases and examples; MCC 1, -1, 0.408248 (TP4 TN3 FP2 FN1), 0 on empty marginal".to_string()
    } else {
        failures.join("; ")
    };
    verdict(9, "metric self-tests", ok, &detail, t0, Duration::from_secs(10));
}
