use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for `{id}`: expected {expected}, found {found}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("duplicate item id `{0}`")]
    DuplicateId(String),
    #[error("non-finite component in `{id}` at index {index}")]
    NonFinite { id: String, index: usize },
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("tag record for `{0}` has no matching embedding")]
    OrphanTags(String),
    #[error("group `{0}` has no members")]
    EmptyGroup(String),
    #[error("invalid group mapping: {0}")]
    InvalidMapping(String),
    #[error("sampling fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
    #[error("lambda {0} is outside [0, 1]")]
    InvalidLambda(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("fairness representations are required for the fmmr kernel")]
    MissingRepresentations,
    #[error("representation set is empty")]
    EmptyRepresentations,
    #[error("at least {needed} samples are required, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("query `{0}` has no tags; precision is undefined")]
    UntaggedQuery(String),
    #[error("no tunable query: every query has undefined metrics")]
    NoTunableQueries,
}

impl Error {
    /// True for errors caused by caller-supplied parameters rather than data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidFraction(_)
                | Error::InvalidLambda(_)
                | Error::InvalidParameter(_)
                | Error::UnknownGroup(_)
                | Error::UnknownItem(_)
                | Error::MissingRepresentations
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
