use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate stroke: {0}")]
    DegenerateStroke(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("no point falls inside the intention area")]
    EmptyIntentionArea,

    #[error("invalid sample count k={k} for {n} points")]
    InvalidK { k: usize, n: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least two distinct clouds to split, got {0}")]
    TooFewClouds(usize),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("no valid view found for target part {0}")]
    NoValidView(u32),

    #[error("unknown cloud `{0}`")]
    UnknownCloud(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unsupported checkpoint format version {0}")]
    CheckpointVersion(u32),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateStroke(_) => "DegenerateStroke",
            Error::InvalidCamera(_) => "InvalidCamera",
            Error::EmptyIntentionArea => "EmptyIntentionArea",
            Error::InvalidK { .. } => "InvalidK",
            Error::EmptyInput => "EmptyInput",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteActivation(_) => "NonFiniteActivation",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::TooFewClouds(_) => "TooFewClouds",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::Parse { .. } => "ParseError",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::NoValidView(_) => "NoValidView",
            Error::UnknownCloud(_) => "UnknownCloud",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::CheckpointVersion(_) => "CheckpointVersion",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
