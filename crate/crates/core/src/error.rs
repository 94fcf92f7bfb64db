use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("channel mismatch: input has {input} channels, weight expects {weight}")]
    ChannelMismatch { input: usize, weight: usize },

    #[error("max pooling needs even spatial dimensions, got {height}x{width}")]
    OddSpatial { height: usize, width: usize },

    #[error("adaptive pooling to {out_h}x{out_w} needs an input at least that large, got {height}x{width}")]
    PoolTooLarge {
        height: usize,
        width: usize,
        out_h: usize,
        out_w: usize,
    },

    #[error("batch normalization in train mode needs at least 2 values per channel, got {0}")]
    BatchTooSmall(usize),

    #[error("label {label} outside class range 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward already ran on this tape; run a new forward pass first")]
    BackwardTwice,

    #[error("feature vector norm {norm:e} is at or below the 1e-9 floor")]
    NearZeroNorm { norm: f64 },

    #[error("qubit count {0} outside the supported range 1..=12")]
    QubitCount(usize),

    #[error("qubit index {index} invalid for a {n_qubits}-qubit register")]
    QubitIndex { index: usize, n_qubits: usize },

    #[error("arity mismatch for {what}: expected {expected}, got {got}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("angle feature {index} = {value} outside [-1, 1]")]
    FeatureOutOfRange { index: usize, value: f64 },

    #[error("circuit parse error on line {line}: {msg}")]
    CircuitParse { line: usize, msg: String },

    #[error("failed to load {path}: {msg}")]
    Load { path: PathBuf, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NanGradient(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("schedule step {step} outside 0..{total}")]
    StepOutOfRange { step: usize, total: usize },

    #[error("split `{0}` is empty")]
    EmptySplit(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("seed sets differ: {0}")]
    SeedMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
