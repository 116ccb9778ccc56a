use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("zero-norm vector in cosine similarity")]
    ZeroNorm,

    #[error("{0} did not converge")]
    NonConvergence(String),

    #[error("missing covariate `{0}`")]
    MissingCovariate(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
