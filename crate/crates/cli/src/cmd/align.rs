use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use tabext_core::align::{align_table, export, AlignParams, ExportFormat};
use tabext_core::ingest::{filter_confidence, group_rows, parse_tsv};

use super::Segmenter;
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::{emit, open, overlay, Context};

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// OCR word table in `tsv` layout, one table region per file. Repeat for more tables.
    #[arg(long = "tsv", value_name = "TSV", required = true)]
    pub tsvs: Vec<PathBuf>,
    /// Weight file from `train`; without it every word is its own cell.
    #[arg(long, value_name = "WTS")]
    pub model: Option<PathBuf>,
    /// Vocabulary the model was trained with.
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// Export format.
    #[arg(long = "out", default_value = "csv", value_parser = ["csv", "latex", "json"])]
    pub format: String,
    /// Destination file; standard output by default.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Words below this OCR confidence are discarded.
    #[arg(long)]
    pub min_conf: Option<f64>,
    /// Interval IOU above which two cells share a column.
    #[arg(long)]
    pub iou_trigger: Option<f64>,
    /// Probability at or above which a token closes its cell.
    #[arg(long)]
    pub cutoff: Option<f64>,
}

impl AlignArgs {
    pub fn overlay(&self, cfg: &mut PipelineConfig) {
        overlay!(cfg, self; min_conf, iou_trigger, cutoff);
    }
}

fn align_one(path: &Path, seg: &Segmenter, cfg: &PipelineConfig, format: ExportFormat) -> Result<String> {
    let parsed = parse_tsv(open(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if parsed.malformed > 0 {
        log::warn!("{}: skipped {} malformed rows", path.display(), parsed.malformed);
    }
    let words = filter_confidence(parsed.words, cfg.min_conf);
    if words.is_empty() {
        return Err(CliError::input(format!("{}: no words at or above confidence {}", path.display(), cfg.min_conf)));
    }
    let table = group_rows(words);
    let probs = seg.probs(&table)?;
    let grid = align_table(&table, &probs, AlignParams { cutoff: cfg.cutoff, iou_trigger: cfg.iou_trigger })?;
    if grid.collisions > 0 {
        log::warn!("{}: {} cells shared a grid position", path.display(), grid.collisions);
    }
    Ok(export(&grid, format))
}

pub fn run(ctx: &Context, args: &AlignArgs) -> Result<()> {
    let format: ExportFormat = args.format.parse()?;
    let seg = Segmenter::load(args.model.as_deref(), args.vocab.as_deref())?;
    let parts: Vec<String> = args
        .tsvs
        .par_iter()
        .map(|p| align_one(p, &seg, &ctx.cfg, format))
        .collect::<Result<_>>()?;
    let text = match (format, parts.len()) {
        (_, 1) => parts.into_iter().next().unwrap(),
        (ExportFormat::Json, _) => format!("[\n{}\n]\n", parts.iter().map(|p| p.trim_end()).collect::<Vec<_>>().join(",\n")),
        _ => parts.join("\n"),
    };
    emit(args.output.as_deref(), text.as_bytes())
}
