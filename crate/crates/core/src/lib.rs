//! Unsupervised domain adaptation for multi-label classifiers trained on
//! feature embeddings.
//!
//! The pieces, bottom up:
//! - [`nn`]: a small MLP with batch norm, dropout and a sigmoid head, with
//!   explicit backpropagation, Adam and cosine learning-rate decay.
//! - [`augment`] and [`embed`]: spectrogram augmentation and a deterministic
//!   stand-in embedding extractor.
//! - [`adapt`]: the adaptation engine (probability interpolation,
//!   distribution alignment, class-specific thresholds, the six-term loss).
//! - [`select`]: confidence scoring and the bounded retention buffer.
//! - [`metrics`]: micro/macro AUPRC and thresholded F1.
//! - [`data`], [`model`]: containers, file formats, synthetic benchmarks.
//! - [`commands`]: the operations behind the `mudas` binary.

pub mod adapt;
pub mod augment;
pub mod baseline;
pub mod commands;
pub mod config;
pub mod data;
pub mod embed;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod select;

pub use error::{FormatError, MudasError, Result};

/// Rows x classes matrix of probabilities in [0, 1].
pub type ProbMatrix = ndarray::Array2<f64>;
