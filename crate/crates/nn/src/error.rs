use thiserror::Error;

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("table has no gold labels")]
    MissingLabels,
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{variant} builds {got} parameters, expected {want}")]
    ParamCount { variant: String, got: usize, want: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("weight file: {0}")]
    Format(String),
    #[error("token id {id} outside vocabulary of {size}")]
    TokenId { id: u32, size: usize },
    #[error(transparent)]
    Core(#[from] tabext_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
