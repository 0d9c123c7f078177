use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid {rows}x{cols}: {reason}")]
    InvalidGrid {
        rows: usize,
        cols: usize,
        reason: &'static str,
    },
    #[error("cell ({row}, {col}) is outside a {rows}x{cols} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid prior configuration: {0}")]
    InvalidPriorConfig(String),
    #[error("invalid belief map: {0}")]
    InvalidBelief(String),
    #[error("invalid field of view: {0}")]
    InvalidMask(String),
    #[error("observation evidence has zero likelihood under every hypothesis")]
    DegenerateEvidence,
    #[error("invalid planner configuration: {0}")]
    InvalidPlannerConfig(String),
    #[error("invalid episode configuration: {0}")]
    InvalidEpisodeConfig(String),
    #[error("percentiles of an empty sample")]
    EmptySample,
    #[error("malformed belief map file: {0}")]
    MalformedMap(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
