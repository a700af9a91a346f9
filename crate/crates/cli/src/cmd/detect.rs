use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use tabext_core::maskpost::{
    default_threshold_grid, detection_counts, generate_separator_labels, mask_to_boxes, read_box_csv,
    tune_threshold, write_box_csv, DetectionCounts, MaskParams, ProbMask,
};
use tabext_core::{BBox, GrayImage};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::{create_dir, emit, open, overlay, Context};

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Probability mask as 8-bit PGM (value / 255). Repeat for more pages; pages are numbered from 1 in flag order.
    #[arg(long = "mask", value_name = "PGM", required = true)]
    pub masks: Vec<PathBuf>,
    /// Probability cut; pixels at or above it count as table.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Regions smaller than this fraction of the page are dropped.
    #[arg(long)]
    pub min_area: Option<f64>,
    /// Ground-truth boxes (`page,left,top,width,height`) for scoring.
    #[arg(long, value_name = "CSV")]
    pub truth: Option<PathBuf>,
    /// Pick the threshold that maximizes mean page IOU against --truth.
    #[arg(long, requires = "truth")]
    pub tune: bool,
    /// IOU needed for a detection to count as correct.
    #[arg(long)]
    pub match_iou: Option<f64>,
    /// Write TABLE/SEPARATOR/OTHER training labels built from --truth into this directory.
    #[arg(long, value_name = "DIR", requires = "truth")]
    pub labels_dir: Option<PathBuf>,
    /// Separator band width in pixels for --labels-dir.
    #[arg(long)]
    pub separator_band: Option<u32>,
    /// Box CSV destination; standard output by default.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
    /// Scores destination when --truth is given; standard error by default.
    #[arg(long, value_name = "CSV")]
    pub report: Option<PathBuf>,
}

impl DetectArgs {
    pub fn overlay(&self, cfg: &mut PipelineConfig) {
        overlay!(cfg, self; threshold, min_area, match_iou, separator_band);
    }
}

fn read_mask(path: &Path) -> Result<ProbMask> {
    let img = GrayImage::read_pgm(open(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(ProbMask::from_gray(&img))
}

fn page_truth(path: &Path, pages: usize) -> Result<Vec<Vec<BBox>>> {
    let rows = read_box_csv(open(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut by_page: BTreeMap<u32, Vec<BBox>> = BTreeMap::new();
    for (page, b) in rows {
        if page == 0 || page as usize > pages {
            return Err(CliError::input(format!(
                "{}: page {page} has no matching --mask (pages run 1..={pages})",
                path.display()
            )));
        }
        by_page.entry(page).or_default().push(b);
    }
    Ok((1..=pages as u32).map(|p| by_page.remove(&p).unwrap_or_default()).collect())
}

pub fn run(ctx: &Context, args: &DetectArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let masks: Vec<ProbMask> = args.masks.par_iter().map(|p| read_mask(p)).collect::<Result<_>>()?;
    let truth = args.truth.as_deref().map(|p| page_truth(p, masks.len())).transpose()?;

    let mut threshold = cfg.threshold;
    let mut report = String::new();
    if args.tune {
        let truth = truth.as_ref().expect("clap enforces --truth");
        let (t, score) = tune_threshold(&masks, truth, &default_threshold_grid(), cfg.min_area)?;
        log::info!("tuned threshold {t} with mean page IOU {score:.6}");
        threshold = t;
        writeln!(report, "tuned_threshold,{t}").unwrap();
        writeln!(report, "mean_page_iou,{score:.6}").unwrap();
    }

    let params = MaskParams { threshold, min_area_frac: cfg.min_area };
    let boxes: Vec<Vec<BBox>> = masks.par_iter().map(|m| mask_to_boxes(m, params)).collect();
    let pages: Vec<(u32, Vec<BBox>)> = boxes.iter().cloned().enumerate().map(|(i, b)| (i as u32 + 1, b)).collect();
    let mut csv = Vec::new();
    write_box_csv(&mut csv, &pages)?;
    emit(args.out.as_deref(), &csv)?;

    if let Some(truth) = &truth {
        let mut counts = DetectionCounts::default();
        for (pred, tb) in boxes.iter().zip(truth) {
            counts.add(detection_counts(pred, tb, cfg.match_iou));
        }
        let s = counts.scores();
        writeln!(report, "threshold,{threshold}").unwrap();
        writeln!(report, "precision,{:.6}", s.precision).unwrap();
        writeln!(report, "recall,{:.6}", s.recall).unwrap();
        match &args.report {
            Some(p) => emit(Some(p), report.as_bytes())?,
            None => eprint!("{report}"),
        }
    }

    if let (Some(dir), Some(truth)) = (&args.labels_dir, &truth) {
        create_dir(dir)?;
        args.masks
            .par_iter()
            .zip(masks.par_iter())
            .zip(truth.par_iter())
            .try_for_each(|((path, mask), tb)| -> Result<()> {
                let grid = generate_separator_labels(tb, mask.width(), mask.height(), cfg.separator_band)?;
                let stem = path.file_stem().map_or("page".into(), |s| s.to_string_lossy().into_owned());
                let mut bytes = Vec::new();
                grid.to_gray().write_pgm(&mut bytes)?;
                emit(Some(&dir.join(format!("{stem}.labels.pgm"))), &bytes)
            })?;
    }
    Ok(())
}
