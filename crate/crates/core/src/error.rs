use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum CfError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: duplicate rating for user {user}, item {item}")]
    Duplicate { line: usize, user: usize, item: usize },

    #[error("line {line}: rating {value} outside [1, 5]")]
    Range { line: usize, value: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("key error: {0}")]
    Key(String),

    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("model `{model}` failed: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<CfError>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CfError>;

impl CfError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CfError::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        CfError::Numeric(msg.into())
    }

    pub(crate) fn key(msg: impl Into<String>) -> Self {
        CfError::Key(msg.into())
    }
}
