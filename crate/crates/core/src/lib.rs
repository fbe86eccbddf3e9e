//! Transformer-based denoising of single-channel EEG epochs.
//!
//! An epoch of `N` samples is reshaped into `k` segments of width `q` and
//! passed through a stack of post-norm encoder blocks (multi-head
//! self-attention across segments, a PReLU feed-forward block within each
//! segment). The crate also carries everything around the model:
//!
//! - [`numerics`]: tensors and a reverse-mode autodiff tape,
//! - [`model`]: the encoder plus four baseline denoisers, parameter/FLOP
//!   accounting and the `EDN1` checkpoint container,
//! - [`data`]: epoch files, semi-synthetic mixing `y = x + λn`, augmentation
//!   and leakage-free splitting,
//! - [`training`]: Adam with bias correction, early stopping and evaluation,
//! - [`metrics`]: RRMSE (temporal and spectral), correlation, FFT and PSD,
//! - [`cli`]: the commands behind the `eegdnet` binary.

pub mod cli;
pub mod data;
mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};

/// Samples per epoch (2 s at 256 Hz).
pub const EPOCH_LEN: usize = 512;
pub const SAMPLE_RATE: f64 = 256.0;
