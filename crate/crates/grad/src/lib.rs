//! Reverse-mode automatic differentiation over `f64` tensors, with the
//! layers needed by the echo-cancellation model: dense, 1-D and 2-D
//! convolutions, (convolutional) LSTMs, batch normalization and embeddings.
//!
//! A [`Graph`] is a tape bound to a [`ParamStore`]. Ops append nodes; a
//! single call to [`Graph::backward`] returns gradients for every trainable
//! parameter the tape touched. Differentiating a gradient is not supported:
//! a tape accepts one backward pass and rejects a second.

pub mod adam;
pub mod checkpoint;
mod conv;
pub mod error;
pub mod gradcheck;
mod graph;
pub mod nn;
mod norm;
mod ops;
pub mod params;
mod tensor;

pub use adam::{apply_buffer_updates, Adam, LrSchedule};
pub use conv::same_padding;
pub use error::{Error, Result};
pub use graph::{Gradients, Graph, Var};
pub use norm::BatchStats;
pub use params::{Init, ParamSpec, ParamStore};
pub use tensor::Tensor;
