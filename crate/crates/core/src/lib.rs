//! Bit-level deep-learning CSI feedback laboratory.
//!
//! The crate covers the whole feedback chain at desk scale: synthetic
//! angular-delay channels ([`channel`]), a small reverse-mode engine for
//! dense networks ([`engine`]), the μ-law scalar quantizer and its bit-stream
//! layout ([`quant`]), the encoder/decoder and quantization adaptors
//! ([`models`]), the training regimes ([`training`]) and metric reporting
//! ([`report`]).

pub mod channel;
pub mod engine;
pub mod error;
mod kv;
pub mod models;
pub mod quant;
pub mod report;
pub mod training;

pub use error::{Error, Result};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
