use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty region")]
    EmptyRegion,
    #[error("box {0:?} lies outside the {1}x{2} grid")]
    BoxOutOfGrid(crate::geom::BBox, u32, u32),
    #[error("degenerate histogram: image has a single intensity")]
    DegenerateHistogram,
    #[error("unsupported rotation angle {0}; expected 0, 90, 180 or 270")]
    BadAngle(i32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("infeasible layout: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
