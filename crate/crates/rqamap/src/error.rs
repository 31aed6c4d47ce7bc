use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] rqamap_core::Error),

    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("row {row}: timestamp is not after the previous row")]
    NonMonotone { row: usize },

    #[error("no data rows")]
    EmptyFile,

    #[error("day {date} is incomplete: {reason}")]
    IncompleteDay { date: String, reason: String },

    #[error("unknown device label `{0}`")]
    MissingLabel(String),

    #[error("no profiles for device `{0}`")]
    EmptyLibrary(String),

    #[error("unsupported format version `{found}`, expected `{expected}`")]
    Version { expected: &'static str, found: String },

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
