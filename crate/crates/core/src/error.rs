use std::path::PathBuf;

use thiserror::Error;

use crate::network::TrainRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate Gaussian: variance {variance} has no density")]
    DegenerateDistribution { variance: f64 },

    #[error("invalid variance {0}: must be finite and non-negative")]
    InvalidVariance(f64),

    #[error("invalid phase point ({sigma_w2}, {sigma_b2}): coordinates must be finite and non-negative")]
    InvalidPhasePoint { sigma_w2: f64, sigma_b2: f64 },

    #[error("activation `{name}` is not supported here: {reason}")]
    UnsupportedActivation { name: &'static str, reason: &'static str },

    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("chi = {chi} >= 1: the correlation length is not real in the chaotic phase")]
    NotALength { chi: f64 },

    #[error("relative entropy diverges at variance {variance}")]
    Divergent { variance: f64 },

    #[error("fixed-point solver did not converge after {iterations} iterations (last iterate {last})")]
    NoConvergence { iterations: usize, last: f64 },

    #[error("no critical point for sigma_w2 = {sigma_w2}: {reason}")]
    NoCriticalPoint { sigma_w2: f64, reason: String },

    #[error("critical point at sigma_w2 = {sigma_w2} has negative bias variance {sigma_b2}")]
    OutOfQuadrant { sigma_w2: f64, sigma_b2: f64 },

    #[error("no sign change of the objective on [{lo}, {hi}]")]
    NoRootInBracket { lo: f64, hi: f64 },

    #[error("rank-deficient design matrix ({rank} of {columns} columns independent)")]
    RankDeficient { rank: usize, columns: usize },

    #[error("degenerate threshold fit: {0}")]
    DegenerateFit(String),

    #[error("no positive weight variance reaches the target: sigma_b2 = {sigma_b2} >= {target}")]
    NoPositiveSolution { sigma_b2: f64, target: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    TrainingDiverged { epoch: usize, partial: Box<TrainRecord> },

    #[error("{path}: bad magic number 0x{found:08x}, expected 0x{expected:08x}")]
    MagicMismatch { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated payload, expected {expected} bytes but found {actual}")]
    Truncated { path: PathBuf, expected: usize, actual: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("requested {requested} items but only {available} are available")]
    Bounds { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
