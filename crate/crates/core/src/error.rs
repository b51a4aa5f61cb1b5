use alloc::string::String;

/// Error type shared by all modules in this crate.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Runtime input violates a documented precondition (shape, id, range).
    #[error("invalid input: {0}")]
    Input(String),
    /// A computation produced NaN or infinity where finiteness is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Error {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Error {
        Error::Input(msg.into())
    }
}
