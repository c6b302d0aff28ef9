//! Hybrid graph neural network for EEG-based depression detection.
//!
//! A temporal conv extractor turns each electrode's signal into node
//! features. Two graph branches convolve them: one over a learned adjacency
//! shared by all inputs, one over an adjacency computed per input. A
//! pooling module groups channels into soft regions, convolves at region
//! level and projects back. Everything is differentiated by the small
//! reverse-mode engine in [`graph`].

pub mod adjacency;
pub mod cv;
pub mod data;
pub mod error;
pub mod extractor;
pub mod gcn;
pub mod gpum;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod params_io;
pub mod preset;
pub mod report;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use cv::{cross_validate, partition_subjects, ten_fold_cv, CvOptions, FoldReport, FoldResult};
pub use data::{load_dataset, save_dataset, segment_recording, Dataset, EegSegment, Label, Recording};
pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use metrics::{MetricSummary, Metrics};
pub use model::{build_variant, forward, predict, ModelConfig, ModelParams, Variant};
pub use parallel::Execution;
pub use params_io::{load_params, load_params_for, save_params};
pub use preset::{Preset, Windowing};
pub use report::ResultTable;
pub use synth::{synth_generate, SynthSpec};
pub use tensor::Tensor;
pub use train::{evaluate, loss, OptimizerKind, TrainConfig, Trainer};
