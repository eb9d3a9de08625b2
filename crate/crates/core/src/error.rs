use thiserror::Error;

/// Errors raised anywhere in the simulator toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid rtt sample: {0} ms")]
    InvalidRtt(f64),

    #[error("loss event must report at least one packet")]
    EmptyLoss,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("simulation needs at least one flow")]
    NoFlows,

    #[error("empty measurement window: {0}")]
    EmptyWindow(String),

    #[error("all throughputs are zero")]
    AllZero,

    #[error("no delivered updates")]
    NoDeliveredUpdates,

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
