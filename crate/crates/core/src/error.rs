use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or parameter dimension disagrees with what the operation needs.
    #[error("{op}: shape mismatch on `{dim}`: expected {expected}, found {found}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{op}: {msg}")]
    InvalidParam { op: &'static str, msg: String },

    /// Genome failed structural validation; `path` locates the offending field.
    #[error("invalid genome at `{path}`: {msg}")]
    Genome { path: String, msg: String },

    /// A JSON document did not match its schema.
    #[error("schema error at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error("node {node}: {msg}")]
    Graph { node: usize, msg: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParam {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn genome(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Genome {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
