use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::params_io::ParamFileError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    ParamFile(#[from] ParamFileError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("conv layer {layer}: input length {len} shorter than kernel {kernel}")]
    SignalTooShort { layer: usize, len: usize, kernel: usize },
    #[error("segment has {got} channels, model expects {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("adjacency entry ({row}, {col}) is negative: {value}")]
    NegativeAdjacency { row: usize, col: usize, value: f64 },
    #[error("label index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite loss {loss} at batch {batch} (parameter norm {param_norm})")]
    NonFiniteLoss { batch: usize, loss: f64, param_norm: f64 },
    #[error("cross-validation needs at least {needed} subjects, found {found}")]
    NotEnoughSubjects { needed: usize, found: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
