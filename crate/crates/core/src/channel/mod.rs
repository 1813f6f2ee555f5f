//! Synthetic channels, the angular-delay transform and dataset files.

mod dataset;
mod matrix;
mod paths;
mod transform;

pub use dataset::{generate_dataset, generate_matrices, ChannelConfig, ChannelSample, Dataset};
pub use matrix::CMatrix;
pub use paths::{generate_paths, synthesize_raw, Path, PathSet, RawChannel, Scenario};
pub use transform::{angular_delay_transform, truncate, AngularDelayPlan};
