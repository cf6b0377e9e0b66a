//! Structure-aware loss, min-over-k relaxation, Adam and the epoch loop.

mod adam;
mod loss;
mod trainer;

pub use adam::{adam_step, adam_step_with, AdamConfig, AdamState, BETA1, BETA2, EPSILON};
pub use loss::{recon_loss, recon_loss_value, structure_weights, LossWeights};
pub use trainer::{
    diffusion_training_step, loss_trace_csv, train, EpochRecord, StepOutcome, TrainConfig,
    TrainState, Trainer,
};
