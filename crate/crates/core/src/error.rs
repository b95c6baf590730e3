use thiserror::Error;

/// Configuration problem detected at load time.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("config error: {msg}")]
pub struct ConfigError {
    msg: String,
}

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError { msg: msg.into() }
    }
}
