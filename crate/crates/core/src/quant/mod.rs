//! μ-law scalar quantization: companding, the sign-magnitude quantizer, bit
//! packing, QSNR and the straight-through training wrapper.

mod bitstream;
mod companding;
mod quantizer;
mod ste;

pub use bitstream::{pack_bits, unpack_bits, BitStream};
pub use companding::{compand, expand, polyline_compand, Polyline};
pub use quantizer::{CompandMode, Codeword, QuantizedCodeword, Quantizer, QuantizerConfig};
pub use ste::{quantize_ste, quantize_tensor};

pub use crate::report::{qsnr, Expectation, RatioStats};
