//! Adamax, the weight-decay and gate-sparsity penalties, and the training
//! loop.

mod adamax;
mod config;
mod penalty;
mod train;

pub use adamax::{AdamaxState, ADAMAX_BETA1, ADAMAX_BETA2, ADAMAX_EPS, ADAMAX_LR};
pub use config::TrainConfig;
pub use penalty::{gate_sparsity_penalty, weight_decay_penalty};
pub use train::{
    train, Batch, BatchSource, EpochRow, RunReport, ShuffledBatches, Target, Validator,
};
