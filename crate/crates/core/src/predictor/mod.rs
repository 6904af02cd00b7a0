//! Character-level temporal ConvNet that predicts a request's outcome
//! (an error code or `Right`) from its serialized text.

pub mod checkpoint;
pub mod encoding;
pub mod eval;
pub mod layers;
pub mod model;
pub mod train;

use thiserror::Error;

pub use encoding::{quantize, serialize_request, Alphabet, QuantizedInput};
pub use eval::{precision, PrecisionReport};
pub use model::{ConvLayerCfg, ConvNetModel, Example, Forward, Mode, ModelCfg, Prediction, Variant};
pub use train::{examples_from_records, split_holdout, train, train_with, EpochMetrics, TrainCfg, Trained};

// ChaCha stream ids keeping the seeded random sequences independent.
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_SHUFFLE: u64 = 2;
pub(crate) const STREAM_DROPOUT: u64 = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("predictions and truths differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
