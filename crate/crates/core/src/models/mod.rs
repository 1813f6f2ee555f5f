//! Dense encoder/decoder, network adaptors and complexity accounting.
//!
//! FLOPs are counted as weight multiply-accumulates per sample (one MAC is
//! one FLOP); biases add parameters but no FLOPs.

mod network;
mod spec;

pub use network::{reals_to_sample, sample_to_reals, Model, ADAPTOR, DECODER, ENCODER};
pub use spec::{AdaptorKind, AdaptorSpec, DecoderSpec, EncoderSpec, ModelSpec, LEAKY_SLOPE};
