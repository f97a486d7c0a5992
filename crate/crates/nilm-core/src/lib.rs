//! Non-intrusive load monitoring toolkit: a sequence-to-sequence
//! disaggregator built from a transformer encoder with multi-head
//! attention, residual connections, and temporal pyramid pooling, plus the
//! data pipeline, training loop, and evaluation suite around it.
//!
//! The crate is self-contained: tensors and reverse-mode automatic
//! differentiation live in [`tensor`], the network blocks in [`blocks`]
//! and [`model`], ingestion and synthesis in [`data`] and [`synth`],
//! optimization in [`train`], persistence in [`checkpoint`], and the
//! metric suite in [`metrics`].

pub mod blocks;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
