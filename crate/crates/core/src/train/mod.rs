//! Loss, optimizer, training loop, evaluation metrics and gradient checking.

mod eval;
mod gradcheck;
mod optim;
mod trainer;

pub use eval::{evaluate, invariance_error, predict_dataset, EvalReport, EVAL_CHUNK, EVAL_SIGMA};
pub use gradcheck::{grad_check, smooth_sample, GradCheckReport, DEFAULT_STEP, SWITCH_MARGIN};
pub use optim::{adam_step, mse_loss, AdamConfig, AdamState};
pub use trainer::{
    train, train_loop, validation_split, EpochMetrics, TrainConfig, TrainOutcome, TrainState, GRAD_CHUNK,
};
