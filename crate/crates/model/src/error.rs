use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("input too short: {what} needs at least {min} frames, got {got}")]
    InputTooShort { what: &'static str, min: usize, got: usize },

    #[error("unknown token id {id} (vocabulary has {vocab} entries)")]
    UnknownToken { id: usize, vocab: usize },

    #[error("{what}: expected {expected}, got {got}")]
    Mismatch { what: &'static str, expected: usize, got: usize },

    #[error("mode {mode} needs a {needed} side input")]
    MissingSideInput { mode: &'static str, needed: &'static str },

    #[error("empty batch")]
    EmptyBatch,

    #[error("training batch of {0} example(s); batch norm needs at least 2")]
    BatchTooSmall(usize),

    #[error("non-finite loss at step {step}; largest gradient in {param} ({magnitude:e})")]
    NonFiniteLoss { step: u64, param: String, magnitude: f64 },

    #[error(transparent)]
    Grad(#[from] tec_grad::Error),

    #[error(transparent)]
    Core(#[from] tec_core::Error),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("config write error: {0}")]
    Serialize(#[from] toml::ser::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
