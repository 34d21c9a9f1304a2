use thiserror::Error;

/// Error surface shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A parameter, hyperparameter, or spec value is outside its valid range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A binary file failed to parse; `offset` is the first bad byte.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// A class id or element index is out of range.
    #[error("index error: {0}")]
    Index(String),

    /// An operation was called in a state that does not permit it.
    #[error("state error: {0}")]
    State(String),

    /// Attention weights violated the non-negativity constraint.
    #[error("constraint error: {0}")]
    Constraint(String),

    /// A math function was called outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scoring or comparison input is incomplete or inconsistent.
    #[error("input error: {0}")]
    Input(String),

    /// Non-finite values were detected where finite math is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn index(msg: impl Into<String>) -> Self {
        Error::Index(msg.into())
    }
    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
