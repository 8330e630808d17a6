//! Masked losses, Adam and the mini-batch training loop.

pub mod adam;
pub mod loss;
pub mod trainer;

pub use adam::AdamState;
pub use loss::{bmh_loss, bmh_loss_value, masked_mse, masked_mse_value, LossKind};
pub use trainer::{
    batch_loss, evaluate_loss, init_rng, plateau_epoch, predict_samples, train, write_history_csv,
    EpochRecord, TrainConfig, TrainOutcome,
};
