//! Adam training against MSE with validation-based early stopping, and
//! evaluation of trained models.

mod adam;
mod config;
mod evaluate;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use evaluate::{evaluate, evaluate_identity, evaluate_with, Evaluation, SnrBin};
pub use trainer::{batch_tensors, train, validation_mse, EpochRecord, TrainLog, Trainer};

#[cfg(test)]
mod tests;
