use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fibre value {y} outside [-{m}, {m}]")]
    Domain { y: f64, m: f64 },

    #[error("target {target} outside [{lo}, {hi}] of the monotone map")]
    Bracket { target: f64, lo: f64, hi: f64 },

    #[error("{0} is not supported for this base map")]
    UnsupportedBase(&'static str),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate domain: {0}")]
    Degenerate(String),

    #[error("fibre family violation: {0}")]
    Family(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown fibre family `{0}`")]
    UnknownFamily(String),
}

pub type Result<T> = std::result::Result<T, Error>;
