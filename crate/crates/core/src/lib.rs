//! Signal processing, echoic-mixture synthesis, the NLMS echo-cancellation
//! baseline and objective metrics for textual echo cancellation.

pub mod corpus;
pub mod error;
pub mod griffin_lim;
pub mod matrix;
pub mod metrics;
pub mod nlms;
pub mod phonemes;
pub mod room;
pub mod signal;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::{FlopsReport, McdReport, Method};
pub use phonemes::PhonemeSequence;
pub use signal::{MelSpectrogram, MfccMatrix, SpectralConfig, Waveform};
