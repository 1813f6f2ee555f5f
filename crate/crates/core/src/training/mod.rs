//! Stage-1, stage-2 and L1 training regimes, evaluation and checkpoints.

mod checkpoint;
mod config;
mod experiment;
mod history;
mod run;

pub use checkpoint::Checkpoint;
pub use config::{AlphaScheduler, Regime, Regularizer, TrainConfig, DEFAULT_LAMBDA};
pub use experiment::{continue_method, train_method, Cell, MethodRun, Preset, Recipe, STAGE2_LR};
pub use history::{read_history, write_history, EpochRecord};
pub use run::{
    dataset_tensor, evaluate, train_l1, train_stage1, train_stage2, BitsEvaluation, Evaluation,
    TrainOutcome,
};

pub use config::parse_compand;
