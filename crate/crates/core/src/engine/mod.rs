//! Minimal reverse-mode engine for dense networks.
//!
//! Training runs on `f32` tensors with `f64` reduction accumulators; the
//! same code runs on `f64` for gradient checking.

mod checkpoint;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use optim::{Adam, LrKind, LrSchedule};
pub use params::{Param, ParamId, ParamSet};
pub use tape::{Activation, Gradients, RatioForm, Tape, Var};
pub use tensor::{Real, Tensor};
