//! Recovering tables from financial page images.
//!
//! The crate covers everything around the learned column segmenter:
//!
//! - [`maskpost`]: table probability masks to boxes, separator training labels,
//!   detection scoring.
//! - [`imgprep`]: crop, binarize, rotate and strip ruling lines before OCR.
//! - [`ingest`]: OCR TSV parsing, row grouping, vocabulary and features.
//! - [`align`]: union-find column alignment, grid assembly and export.
//! - [`metrics`]: SMAPE, MCC and alignment reports.
//! - [`synth`]: seeded generators with ground truth for every stage.

pub mod align;
pub mod error;
pub mod geom;
pub mod imgprep;
pub mod ingest;
pub mod maskpost;
pub mod metrics;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{box_iou, interval_iou, BBox, Interval, WordRecord};
pub use raster::GrayImage;
