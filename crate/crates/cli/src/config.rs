//! Flat `key = value` pipeline configuration.

use std::collections::HashSet;
use std::path::Path;

use tabext_core::align::{DEFAULT_CUTOFF, DEFAULT_IOU_TRIGGER};
use tabext_core::imgprep::DEFAULT_PAD;
use tabext_core::ingest::DEFAULT_MIN_CONF;
use tabext_core::maskpost::{DEFAULT_MATCH_IOU, DEFAULT_MIN_AREA_FRAC, DEFAULT_SEPARATOR_BAND, DEFAULT_THRESHOLD};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub threshold: f64,
    pub min_area: f64,
    pub match_iou: f64,
    pub separator_band: u32,
    pub pad: u32,
    pub min_conf: f64,
    pub iou_trigger: f64,
    pub cutoff: f64,
    pub lr: f64,
    pub updates: usize,
    pub val_every: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            min_area: DEFAULT_MIN_AREA_FRAC,
            match_iou: DEFAULT_MATCH_IOU,
            separator_band: DEFAULT_SEPARATOR_BAND,
            pad: DEFAULT_PAD,
            min_conf: DEFAULT_MIN_CONF,
            iou_trigger: DEFAULT_IOU_TRIGGER,
            cutoff: DEFAULT_CUTOFF,
            lr: 0.01,
            updates: 640,
            val_every: 16,
            seed: 0,
            jobs: 1,
        }
    }
}

pub const KEYS: [&str; 13] = [
    "threshold",
    "min_area",
    "match_iou",
    "separator_band",
    "pad",
    "min_conf",
    "iou_trigger",
    "cutoff",
    "lr",
    "updates",
    "val_every",
    "seed",
    "jobs",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::input(format!("config key {key}: cannot parse {value:?}")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "threshold" => self.threshold = parse_value(key, value)?,
            "min_area" => self.min_area = parse_value(key, value)?,
            "match_iou" => self.match_iou = parse_value(key, value)?,
            "separator_band" => self.separator_band = parse_value(key, value)?,
            "pad" => self.pad = parse_value(key, value)?,
            "min_conf" => self.min_conf = parse_value(key, value)?,
            "iou_trigger" => self.iou_trigger = parse_value(key, value)?,
            "cutoff" => self.cutoff = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "updates" => self.updates = parse_value(key, value)?,
            "val_every" => self.val_every = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "jobs" => self.jobs = parse_value(key, value)?,
            _ => return Err(CliError::input(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults overlaid with the file's entries. Blank lines and `#`
    /// comments are ignored; a key may appear once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("config line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(CliError::input(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| CliError::input(format!("config line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64, lo_open: bool| {
            let ok = v.is_finite() && v <= 1.0 && if lo_open { v > 0.0 } else { v >= 0.0 };
            if ok {
                Ok(())
            } else {
                Err(CliError::input(format!("{name} must lie in {}0, 1], got {v}", if lo_open { "(" } else { "[" })))
            }
        };
        unit("threshold", self.threshold, false)?;
        unit("min_area", self.min_area, false)?;
        unit("match_iou", self.match_iou, true)?;
        unit("iou_trigger", self.iou_trigger, true)?;
        unit("cutoff", self.cutoff, false)?;
        if !(0.0..=100.0).contains(&self.min_conf) {
            return Err(CliError::input(format!("min_conf must lie in [0, 100], got {}", self.min_conf)));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(CliError::input(format!("lr must be a non-negative number, got {}", self.lr)));
        }
        for (name, v) in [
            ("updates", self.updates),
            ("val_every", self.val_every),
            ("jobs", self.jobs),
            ("separator_band", self.separator_band as usize),
        ] {
            if v == 0 {
                return Err(CliError::input(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
