//! MDCT-domain speech super-resolution toolkit.
//!
//! The pipeline maps a band-limited 48 kHz waveform through a KBD-windowed
//! MDCT, arcsinh companding, a Swin-style U-Net generator and the exact
//! inverse path back to audio. Training pairs a time-domain discriminator
//! set (multi-period and multi-scale) with a high-band MDCT discriminator,
//! all built on a small reverse-mode autodiff engine.

pub mod autograd;
pub mod bands;
pub mod degrade;
pub mod error;
pub mod losses;
pub mod mdct;
pub mod metrics;
pub mod models;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
