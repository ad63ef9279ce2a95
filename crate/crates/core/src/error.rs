use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("out of domain: {0}")]
    Domain(String),

    /// Text input failed to parse.
    #[error("{message}, {location}")]
    Parse { location: Location, message: String },

    #[error("{what} `{id}` already exists")]
    Conflict { what: &'static str, id: String },

    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },

    /// Two arguments that must agree (e.g. histograms on one binning) do not.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("type error: {0}")]
    Type(String),

    #[error("extent is empty")]
    EmptyExtent,

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Line(line),
            message: message.into(),
        }
    }

    pub(crate) fn at_row(row: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location::Row(row),
            message: message.into(),
        }
    }
}

/// 1-based position of a parse failure. CSV rows count the header as row 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Row(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Row(n) => write!(f, "row {n}"),
        }
    }
}
