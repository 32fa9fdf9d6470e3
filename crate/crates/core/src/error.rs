use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The filter keeps no answer with positive probability.
    #[error("degenerate filter: probability of keeping an answer is zero")]
    DegenerateFilter,

    /// A difficulty indicator of exactly zero has no defined limit.
    #[error("difficulty indicator is zero; the limiting accuracy is undefined")]
    TieAtInfinity,

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A strategy was requested without the data it needs.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("item {id}: {source}")]
    Item {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
