use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate local frame{}: {reason}", frame_suffix(.frame))]
    DegenerateFrame { frame: Option<usize>, reason: &'static str },

    #[error("sequence too short: {len} samples, need at least {required}")]
    SequenceTooShort { len: usize, required: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("interval [{start}, {end}] too short for a trajectory (need at least 2 frames)")]
    IntervalTooShort { start: usize, end: usize },

    #[error("descriptor block of width {block} exceeds matrix width {width}")]
    WidthOverflow { block: usize, width: usize },

    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse { line: usize, column: usize, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class {class} has no training samples")]
    EmptyClass { class: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("{}: {source}", .path.display())]
    Entry {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn frame_suffix(frame: &Option<usize>) -> String {
    match frame {
        Some(f) => format!(" at frame {f}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn at_entry(self, path: impl Into<PathBuf>) -> Self {
        Error::Entry { path: path.into(), source: Box::new(self) }
    }
}
