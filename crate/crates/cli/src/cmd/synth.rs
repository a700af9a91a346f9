use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use tabext_core::ingest::{write_corpus, write_tsv, LabeledTable};
use tabext_core::maskpost::write_box_csv;
use tabext_core::synth::{gen_mask_page, render_raster, MaskPageSpec};
use tabext_core::synth::{gen_table, split_seed, Difficulty, SynthSpec, SynthTable};
use tabext_core::WordRecord;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::{create_dir, emit, overlay, Context};

/// Seed streams derived from `--seed`, kept apart so adding masks or
/// rasters never changes the tables.
const MASK_STREAM: u64 = u64::MAX;
const RASTER_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of tables.
    #[arg(long, default_value_t = 100)]
    pub tables: usize,
    #[arg(long, default_value = "clean", value_parser = ["clean", "noisy", "context"])]
    pub difficulty: String,
    /// Labeled corpus destination (one JSON table per line); standard output by default.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write each table's words as OCR `tsv` plus its true grid as CSV.
    #[arg(long, value_name = "DIR")]
    pub tsv_dir: Option<PathBuf>,
    /// Also render each table as a PGM raster.
    #[arg(long, value_name = "DIR")]
    pub raster_dir: Option<PathBuf>,
    /// Leave ruling lines out of the rasters.
    #[arg(long)]
    pub no_rules: bool,
    /// Also write probability-mask pages and their true boxes (`boxes.csv`).
    #[arg(long, value_name = "DIR")]
    pub mask_dir: Option<PathBuf>,
    /// Number of mask pages.
    #[arg(long, default_value_t = 10)]
    pub pages: usize,
    /// Give the mask pages edge bands around this cut, with holes, ragged borders and speckle.
    #[arg(long)]
    pub cut: Option<f64>,
    /// Place a second box within a few pixels of the first on every mask page.
    #[arg(long)]
    pub adjacent: bool,
}

impl SynthArgs {
    pub fn overlay(&self, cfg: &mut PipelineConfig) {
        overlay!(cfg, self; seed);
    }
}

/// Same tables as `gen_corpus`, with candidate indices laid out in parallel
/// batches and accepted in index order.
fn corpus(base: &SynthSpec, n: usize) -> Vec<SynthTable> {
    let mut out = Vec::with_capacity(n);
    let mut next = 0u64;
    while out.len() < n {
        let batch = (n - out.len()).max(16) as u64;
        let made: Vec<Option<SynthTable>> =
            (next..next + batch).into_par_iter().map(|i| gen_table(&base.for_table(i)).ok()).collect();
        out.extend(made.into_iter().flatten().take(n - out.len()));
        next += batch;
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn run(ctx: &Context, args: &SynthArgs) -> Result<()> {
    let seed = ctx.cfg.seed;
    let difficulty: Difficulty = args.difficulty.parse()?;
    let tables = corpus(&SynthSpec::preset(difficulty, seed), args.tables);
    log::info!("generated {} tables", tables.len());

    let labeled: Vec<LabeledTable> = tables.iter().map(|t| t.table.clone()).collect();
    let mut bytes = Vec::new();
    write_corpus(&mut bytes, &labeled)?;
    emit(args.out.as_deref(), &bytes)?;

    if let Some(dir) = &args.tsv_dir {
        create_dir(dir)?;
        tables.par_iter().enumerate().try_for_each(|(i, t)| -> Result<()> {
            let words: Vec<WordRecord> = t.table.words.words().cloned().collect();
            let mut tsv = Vec::new();
            write_tsv(&mut tsv, &words)?;
            emit(Some(&dir.join(format!("table{:04}.tsv", i + 1))), &tsv)?;
            let mut grid = String::new();
            for row in &t.grid {
                let fields: Vec<String> = row.iter().map(|c| csv_field(c)).collect();
                writeln!(grid, "{}", fields.join(",")).unwrap();
            }
            emit(Some(&dir.join(format!("table{:04}.truth.csv", i + 1))), grid.as_bytes())
        })?;
    }

    if let Some(dir) = &args.raster_dir {
        create_dir(dir)?;
        let stream = split_seed(seed, RASTER_STREAM);
        tables.par_iter().enumerate().try_for_each(|(i, t)| -> Result<()> {
            let r = render_raster(t, !args.no_rules, split_seed(stream, i as u64));
            let mut pgm = Vec::new();
            r.image.write_pgm(&mut pgm)?;
            emit(Some(&dir.join(format!("table{:04}.pgm", i + 1))), &pgm)
        })?;
    }

    if let Some(dir) = &args.mask_dir {
        if let Some(c) = args.cut {
            if !(c > 0.0 && c < 1.0) {
                return Err(CliError::input(format!("--cut must lie strictly between 0 and 1, got {c}")));
            }
        }
        create_dir(dir)?;
        let stream = split_seed(seed, MASK_STREAM);
        let pages: Vec<(u32, Vec<tabext_core::BBox>)> = (0..args.pages)
            .into_par_iter()
            .map(|i| -> Result<(u32, Vec<tabext_core::BBox>)> {
                let page_seed = split_seed(stream, i as u64);
                let mut spec = match args.cut {
                    Some(c) => MaskPageSpec::banded(page_seed, c),
                    None => MaskPageSpec::clean(page_seed),
                };
                spec.adjacent = args.adjacent;
                let page = gen_mask_page(&spec);
                let mut pgm = Vec::new();
                page.mask.to_gray().write_pgm(&mut pgm)?;
                emit(Some(&dir.join(format!("page{:04}.pgm", i + 1))), &pgm)?;
                Ok((i as u32 + 1, page.boxes))
            })
            .collect::<Result<_>>()?;
        let mut csv = Vec::new();
        write_box_csv(&mut csv, &pages)?;
        emit(Some(&dir.join("boxes.csv")), &csv)?;
    }
    Ok(())
}
