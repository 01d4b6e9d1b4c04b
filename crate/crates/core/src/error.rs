use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cell at block {block}: {reason}")]
    InvalidCell { block: usize, reason: String },

    #[error("cell has {blocks} blocks, canonicalization supports at most {max}")]
    CellTooLarge { blocks: usize, max: usize },

    #[error("cannot parse cell text {text:?}: {reason}")]
    CellParse { text: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("block position {position} outside 1..={max}")]
    PositionOutOfRange { position: usize, max: usize },

    #[error("cell already has {0} blocks, the configured maximum")]
    CellFull(usize),

    #[error("degenerate reindex: max flat-cell time {max_time} <= empty-cell time {t0}")]
    DegenerateReindex { max_time: f64, t0: f64 },

    #[error("reindex table has no entry for operator {0}")]
    MissingReindex(usize),

    #[error("need at least {needed} records to fit, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("metric undefined: {0}")]
    Metric(&'static str),

    #[error("regressor: {0}")]
    Regressor(String),

    #[error("unknown export format {0:?}")]
    UnknownFormat(String),

    #[error("evaluation failed for every candidate of step {step}")]
    EvaluatorCascade { step: usize },

    #[error("evaluator: {0}")]
    Evaluator(String),

    #[error("run state in {dir}: {reason}")]
    RunState { dir: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn invalid(block: usize, reason: impl Into<String>) -> Self {
        Error::InvalidCell {
            block,
            reason: reason.into(),
        }
    }

    pub(crate) fn run_state(dir: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::RunState {
            dir: dir.into(),
            reason: reason.into(),
        }
    }
}
