use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke a precondition (sizes, counts, empty inputs).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The requested combination is not supported (e.g. a closed form in d > 1).
    #[error("unsupported: {0}")]
    Capability(String),

    /// A run produced a non-finite coordinate.
    #[error("numerical divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    /// The quadrature grid did not capture enough probability mass.
    #[error("grid coverage error: density integrates to {mass:.6} on the grid (need >= {required})")]
    Coverage { mass: f64, required: f64 },

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
