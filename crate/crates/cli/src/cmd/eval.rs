use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use tabext_core::align::{align_table, AlignParams};
use tabext_core::ingest::LabeledTable;
use tabext_core::metrics::{eval_alignment, AlignmentReport};

use super::train::load_corpus;
use super::Segmenter;
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::{emit, overlay, Context};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth corpus; gold labels enable token MCC.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Weight file to evaluate; without it, and without --pred, the unsupervised baseline is scored.
    #[arg(long, value_name = "WTS", conflicts_with = "pred")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// Corpus whose labels are predictions, table for table with --corpus.
    #[arg(long, value_name = "FILE")]
    pub pred: Option<PathBuf>,
    /// Metrics table destination; standard output by default.
    #[arg(long, value_name = "CSV")]
    pub output: Option<PathBuf>,
    /// Per-table `id,pred_cells,true_cells,smape` rows.
    #[arg(long, value_name = "CSV")]
    pub per_table: Option<PathBuf>,
    #[arg(long)]
    pub min_conf: Option<f64>,
    #[arg(long)]
    pub iou_trigger: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<f64>,
}

impl EvalArgs {
    pub fn overlay(&self, cfg: &mut PipelineConfig) {
        overlay!(cfg, self; min_conf, iou_trigger, cutoff);
    }
}

/// Predicted segment labels and the grid's non-empty cell count for one table.
struct Scored {
    labels: Vec<u8>,
    cells: usize,
}

fn score(table: &LabeledTable, probs: &[f64], params: AlignParams) -> Result<Scored> {
    let grid = align_table(&table.words, probs, params)?;
    let labels = probs.iter().map(|&p| u8::from(p >= params.cutoff)).collect();
    Ok(Scored { labels, cells: grid.nonempty_cells() })
}

pub fn run(ctx: &Context, args: &EvalArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let params = AlignParams { cutoff: cfg.cutoff, iou_trigger: cfg.iou_trigger };
    let gold = load_corpus(&args.corpus, cfg.min_conf)?;
    let truth: Vec<usize> = gold
        .iter()
        .map(|t| {
            t.true_cell_count()
                .ok_or_else(|| CliError::input(format!("table {} has neither true_cells nor gold labels", t.id)))
        })
        .collect::<Result<_>>()?;

    let (name, params_count, scored): (String, usize, Vec<Scored>) = match &args.pred {
        Some(path) => {
            let pred = load_corpus(path, cfg.min_conf)?;
            if pred.len() != gold.len() {
                return Err(CliError::input(format!(
                    "{} holds {} tables but the corpus holds {}",
                    path.display(),
                    pred.len(),
                    gold.len()
                )));
            }
            let scored = pred
                .par_iter()
                .zip(&gold)
                .map(|(p, g)| {
                    if p.id != g.id {
                        return Err(CliError::input(format!("prediction table {:?} lines up with {:?}", p.id, g.id)));
                    }
                    let labels = p
                        .labels
                        .as_ref()
                        .ok_or_else(|| CliError::input(format!("prediction table {} has no labels", p.id)))?;
                    let probs: Vec<f64> = labels.iter().flatten().map(|&l| f64::from(l)).collect();
                    score(p, &probs, params)
                })
                .collect::<Result<_>>()?;
            ("PRED".to_string(), 0, scored)
        }
        None => {
            let seg = Segmenter::load(args.model.as_deref(), args.vocab.as_deref())?;
            let scored = gold
                .par_iter()
                .map(|t| score(t, &seg.probs(&t.words)?, params))
                .collect::<Result<_>>()?;
            (seg.variant().to_string(), seg.param_count(), scored)
        }
    };

    let counts: Vec<(usize, usize)> = scored.iter().zip(&truth).map(|(s, &t)| (s.cells, t)).collect();
    let token_labels = token_pairs(&gold, &scored);
    let report = eval_alignment(&counts, token_labels.as_ref().map(|(p, g)| (&p[..], &g[..])))?;

    if let Some(path) = &args.per_table {
        let mut text = String::from("id,pred_cells,true_cells,smape\n");
        for ((t, &(p, g)), s) in gold.iter().zip(&counts).zip(&report.per_table) {
            writeln!(text, "{},{p},{g},{s:.4}", t.id).unwrap();
        }
        emit(Some(path), text.as_bytes())?;
    }
    let text = format!("{}\n{}\n", AlignmentReport::csv_header(), report.csv_row(&name, params_count));
    emit(args.output.as_deref(), text.as_bytes())
}

/// Pooled predicted and gold token labels, when every table has gold labels
/// covering the same tokens as its prediction.
fn token_pairs(gold: &[LabeledTable], scored: &[Scored]) -> Option<(Vec<u8>, Vec<u8>)> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (g, s) in gold.iter().zip(scored) {
        let labels: Vec<u8> = g.labels.as_ref()?.iter().flatten().copied().collect();
        if labels.len() != s.labels.len() {
            return None;
        }
        truth.extend(labels);
        pred.extend(&s.labels);
    }
    Some((pred, truth))
}
