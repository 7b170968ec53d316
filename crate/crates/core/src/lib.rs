//! Multi-scale temporal/spatial convolutional network for binary EEG arousal
//! classification, with everything it needs built in: a small reverse-mode
//! autodiff engine, Adam training with early stopping, Chebyshev Type II
//! filter-bank features, a linear hinge-loss baseline, synthetic EEG and
//! leave-one-session-out evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod data;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

/// RNG used everywhere a seed is accepted.
pub type SeededRng = rand_chacha::ChaCha8Rng;
