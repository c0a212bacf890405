//! Lightweight convolutional autoencoder for calibration-free EEG artifact
//! removal.
//!
//! The crate is organised bottom-up:
//!
//! - [`neuralcore`]: tensors, convolution and batch-norm layers with exact
//!   backward passes, MSE loss, Adam.
//! - [`model`]: the five-convolution / four-batch-norm network, parameter
//!   counting and the binary checkpoint format.
//! - [`data`]: the [`Recording`](data::Recording) container, file formats,
//!   preprocessing (common average reference, zero-phase FIR band-pass,
//!   decimation), window/epoch extraction and a synthetic EEG generator.
//! - [`harness`]: subject-disjoint folds, the training loop, evaluation and
//!   data-size ablations.
//! - [`streaming`]: ring-buffer online reconstruction with a 0.5 s hop, and
//!   its offline equivalent.
//! - [`analysis`]: reconstruction fitness, Welch PSD and PCA projections of
//!   latent features.

// Validation is written as `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
mod error;
pub mod harness;
pub mod model;
pub mod neuralcore;
pub mod streaming;

pub use error::{Error, Result};
