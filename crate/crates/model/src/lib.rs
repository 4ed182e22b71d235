//! Sequence-to-sequence textual echo cancellation: an audio encoder for the
//! microphone spectrogram, a text encoder for the playback's source text,
//! multi-source Gaussian-mixture attention and a Tacotron-style decoder.

pub mod attention;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod flops;
pub mod infer;
pub mod loss;
pub mod model;
pub mod train;

pub use config::{Mode, ModelConfig};
pub use error::{Error, Result};
pub use flops::flops_estimate;
pub use infer::{infer, infer_with_stop, Inference};
pub use loss::{compute_loss, stop_targets, LossBreakdown};
pub use model::{variant_factory, Example, Model, SideInput};
pub use train::Trainer;
