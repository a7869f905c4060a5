use thiserror::Error;

/// Errors surfaced by the library. The CLI maps these onto exit codes:
/// configuration/domain problems are usage errors, rank deficiency is an
/// analysis failure, and I/O failures are reported as such.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the range the simulator accepts.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input value is structurally valid but not in the operation's domain
    /// (e.g. a bid that is not a grid level, a reward outside [0, 1]).
    #[error("domain error: {0}")]
    Domain(String),

    /// The design matrix does not have full column rank.
    #[error("rank-deficient design matrix; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    /// A dataset is missing columns the analysis needs.
    #[error("missing required columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    /// An internal invariant was violated; indicates a bug, not bad input.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
