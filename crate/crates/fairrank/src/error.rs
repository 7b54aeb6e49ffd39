use std::path::PathBuf;

/// Errors raised by file handling and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] fairrank_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Yaml { path: PathBuf, source: serde_yaml::Error },
    #[error("query `{query}`: {source}")]
    Query { query: String, source: fairrank_core::Error },
    #[error("query filter selected no items")]
    EmptySelection,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
}

impl Error {
    /// True when the error stems from arguments rather than input data.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Core(e) | Error::Query { source: e, .. } => e.is_validation(),
            Error::InvalidSpec(_) | Error::InvalidExperiment(_) => true,
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn in_query(query: &str) -> impl FnOnce(fairrank_core::Error) -> Self + '_ {
        move |source| Error::Query { query: query.to_string(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
