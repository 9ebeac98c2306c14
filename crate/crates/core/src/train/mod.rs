//! Cross-validated training with early stopping and resumable checkpoints.

mod checkpoint;
mod config;
mod cv;
mod early_stop;
mod fold;
mod step;

pub use checkpoint::Checkpoint;
pub use config::{InitSource, TrainConfig, CONFIG_KEYS};
pub use cv::{
    checkpoint_path, load_perceptual, run_ablation, run_cross_validation, CvResult, RunOptions, RunOutcome, Variant,
};
pub use early_stop::EarlyStopState;
pub use fold::{evaluate_epoch, train_fold, FoldContext, FoldOutcome, FoldResult, INIT_STREAM, TRAIN_STREAM};
pub use step::{argmax_mask, batch_gradients, evaluate_batch, BatchGradients, SampleEval};
