use std::path::PathBuf;

use clap::Args;
use tabext_core::imgprep::{prepare_region, PrepOptions};
use tabext_core::{BBox, GrayImage};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::{emit, open, overlay, Context};

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// Page image as 8-bit PGM.
    #[arg(long, value_name = "PGM")]
    pub image: PathBuf,
    /// Region to crop as LEFT,TOP,WIDTH,HEIGHT; the whole page by default.
    #[arg(long, value_name = "L,T,W,H", value_parser = parse_roi)]
    pub roi: Option<BBox>,
    /// White border added around the crop.
    #[arg(long)]
    pub pad: Option<u32>,
    /// Clockwise quarter turn that puts the text upright.
    #[arg(long, default_value_t = 0, value_parser = parse_angle)]
    pub angle: i32,
    /// Skip the ruling-line removal step.
    #[arg(long)]
    pub no_line_removal: bool,
    /// Cleaned region as PGM; standard output by default.
    #[arg(long, value_name = "PGM")]
    pub out: Option<PathBuf>,
    /// Also write the detected line mask (black = line) here.
    #[arg(long, value_name = "PGM")]
    pub line_mask: Option<PathBuf>,
}

impl PrepArgs {
    pub fn overlay(&self, cfg: &mut PipelineConfig) {
        overlay!(cfg, self; pad);
    }
}

fn parse_angle(s: &str) -> std::result::Result<i32, String> {
    match s.trim() {
        "0" => Ok(0),
        "90" => Ok(90),
        "180" => Ok(180),
        "270" => Ok(270),
        other => Err(format!("expected 0, 90, 180 or 270, got {other:?}")),
    }
}

fn parse_roi(s: &str) -> std::result::Result<BBox, String> {
    let nums: Vec<u32> = s
        .split(',')
        .map(|f| f.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("expected four non-negative integers, got {s:?}"))?;
    match nums[..] {
        [l, t, w, h] => BBox::try_new(l, t, w, h).ok_or_else(|| "region must have positive width and height".into()),
        _ => Err(format!("expected L,T,W,H, got {s:?}")),
    }
}

pub fn run(ctx: &Context, args: &PrepArgs) -> Result<()> {
    let img = GrayImage::read_pgm(open(&args.image)?)
        .map_err(|e| CliError::input(format!("{}: {e}", args.image.display())))?;
    let roi = args.roi.unwrap_or_else(|| BBox::new(0, 0, img.width(), img.height()));
    let opts = PrepOptions { pad: ctx.cfg.pad, angle: args.angle, remove_lines: !args.no_line_removal };
    let out = prepare_region(&img, roi, &opts)?;
    log::info!("otsu threshold {}", out.otsu);
    if let Some(path) = &args.line_mask {
        let mask = out
            .line_mask
            .as_ref()
            .ok_or_else(|| CliError::input("--line-mask cannot be combined with --no-line-removal"))?;
        let mut bytes = Vec::new();
        mask.write_pgm(&mut bytes)?;
        emit(Some(path), &bytes)?;
    }
    let mut bytes = Vec::new();
    out.image.write_pgm(&mut bytes)?;
    emit(args.out.as_deref(), &bytes)
}
