//! Reverse-mode autodiff over 2-D tensors, the column segmentation models
//! built on it, their training loop and weight files.

mod error;
pub mod gradcheck;
pub mod graph;
pub mod io;
pub mod model;
mod params;
pub mod tensor;
pub mod train;

pub use error::{NnError, Result};
pub use gradcheck::{grad_check, GradCheck};
pub use io::{load_weights, load_weights_for, save_weights, write_history_csv};
pub use model::{build_model, ModelConfig, SegModel, Variant};
pub use params::ParamStore;
pub use tabext_core::metrics::mcc;
pub use tensor::Tensor;
pub use train::{evaluate_mcc, predict_labels, train, Adam, HistoryRow, TrainOptions, TrainOutcome};
