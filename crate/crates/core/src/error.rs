use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("routing error: account {0} is not registered with any bank")]
    Routing(u64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("malformed record: {0}")]
    Format(String),
    #[error("missing artifact {path}: run `{producer}` first")]
    MissingArtifact { path: String, producer: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Dimension {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}
