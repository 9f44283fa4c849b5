use thiserror::Error;

/// Errors surfaced by the simulator and control library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("path too short: need at least 2 distinct poses, got {0}")]
    PathTooShort(usize),

    #[error("localization lost, no steering command available")]
    LocalizationLost,

    #[error("teach aborted: {0}")]
    TeachAborted(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("path does not match scenario: {0}")]
    PathMismatch(String),

    #[error("run aborted at tick {tick}: {reason}")]
    RunAborted { tick: u64, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} contains a non-finite value")))
    }
}
