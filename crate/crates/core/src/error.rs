use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("line search did not terminate after {backtracks} step inflations (block {block}, iteration {iteration})")]
    LineSearch {
        block: &'static str,
        iteration: usize,
        backtracks: usize,
    },

    #[error("descent inequality violated at iteration {iteration}: {detail}")]
    DescentViolation { iteration: usize, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
