use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use tabext_core::ingest::{build_vocab, featurize_table, read_corpus, CharClassTagger, FeaturizedTable, LabeledTable, TableWords, Vocab, VocabParams};
use tabext_nn::{build_model, save_weights, train, write_history_csv, ModelConfig, TrainOptions, Variant};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::{emit, open, overlay, Context};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model variant, e.g. lstm_local or tr_global.
    #[arg(long)]
    pub variant: Variant,
    /// Labeled training corpus (one JSON table per line).
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Labeled validation corpus used to pick the best checkpoint.
    #[arg(long, value_name = "FILE")]
    pub val: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Best-checkpoint weight file.
    #[arg(long, value_name = "WTS")]
    pub out: PathBuf,
    /// Per-update loss and validation MCC as CSV; standard output by default.
    #[arg(long, value_name = "CSV")]
    pub history: Option<PathBuf>,
    /// Reuse this vocabulary instead of building one from the training corpus.
    #[arg(long, value_name = "FILE", conflicts_with = "vocab_out")]
    pub vocab: Option<PathBuf>,
    /// Where to write the built vocabulary; defaults to the weight path plus `.vocab`.
    #[arg(long, value_name = "FILE")]
    pub vocab_out: Option<PathBuf>,
    #[arg(long)]
    pub updates: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Validate every N updates (and after the last).
    #[arg(long)]
    pub val_every: Option<usize>,
    /// Words below this OCR confidence are discarded.
    #[arg(long)]
    pub min_conf: Option<f64>,
}

impl TrainArgs {
    pub fn overlay(&self, cfg: &mut PipelineConfig) {
        overlay!(cfg, self; seed, updates, lr, val_every, min_conf);
    }
}

pub(crate) fn load_corpus(path: &Path, min_conf: f64) -> Result<Vec<LabeledTable>> {
    let tables = read_corpus(open(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if tables.is_empty() {
        return Err(CliError::input(format!("{}: corpus is empty", path.display())));
    }
    Ok(tables
        .iter()
        .map(|t| t.filter_confidence(min_conf))
        .filter(|t| !t.words.rows.is_empty())
        .collect())
}

fn featurize_all(tables: &[LabeledTable], vocab: &Vocab, what: &Path) -> Result<Vec<FeaturizedTable>> {
    tables
        .par_iter()
        .map(|t| {
            let labels = t
                .labels
                .as_deref()
                .ok_or_else(|| CliError::input(format!("{}: table {} has no gold labels", what.display(), t.id)))?;
            featurize_table(&t.words, vocab, &CharClassTagger, Some(labels))
                .map_err(|e| CliError::input(format!("{}: table {}: {e}", what.display(), t.id)))
        })
        .collect()
}

pub fn run(ctx: &Context, args: &TrainArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    if !args.variant.is_trainable() {
        return Err(CliError::input(format!("{} has no parameters to train", args.variant)));
    }
    let train_set = load_corpus(&args.corpus, cfg.min_conf)?;
    let val_set = load_corpus(&args.val, cfg.min_conf)?;

    let vocab = match &args.vocab {
        Some(p) => Vocab::read(open(p)?).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
        None => {
            let words: Vec<TableWords> = train_set.iter().map(|t| t.words.clone()).collect();
            let vocab = build_vocab(&words, &CharClassTagger, VocabParams::default())?;
            let path = args.vocab_out.clone().unwrap_or_else(|| {
                let mut p = args.out.clone().into_os_string();
                p.push(".vocab");
                PathBuf::from(p)
            });
            let mut bytes = Vec::new();
            vocab.write(&mut bytes)?;
            emit(Some(&path), &bytes)?;
            vocab
        }
    };
    log::info!("vocabulary of {} entries", vocab.len());

    let ftrain = featurize_all(&train_set, &vocab, &args.corpus)?;
    let fval = featurize_all(&val_set, &vocab, &args.val)?;
    let model = build_model(ModelConfig::new(args.variant), cfg.seed)?;
    let opts = TrainOptions { updates: cfg.updates, lr: cfg.lr, seed: cfg.seed, val_every: cfg.val_every, cutoff: cfg.cutoff };
    let outcome = train(model, &ftrain, &fval, &opts)?;
    log::info!("best validation MCC {:.4} at update {}", outcome.best_val_mcc, outcome.best_update);

    let mut weights = Vec::new();
    save_weights(&outcome.model, &mut weights)?;
    emit(Some(&args.out), &weights)?;
    let mut history = Vec::new();
    write_history_csv(&mut history, &outcome.history)?;
    emit(args.history.as_deref(), &history)
}
