use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("zero-energy signal: {0}")]
    ZeroEnergy(&'static str),

    #[error("adaptive filter diverged at step {step}")]
    Divergence { step: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("unsupported WAV format: {0}")]
    UnsupportedWav(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
