//! Dense ReLU networks: initialization, instrumented forward pass, backprop
//! training with Adam/SGD, regularizers and gradient checking.

mod backprop;
pub mod checkpoint;
mod gradcheck;
mod model;
mod train;

pub use backprop::{loss_and_gradients, BnMode, Gradients, LossEval};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use model::{softmax, BatchNorm, BatchTrace, ForwardTrace, MlpModel, DEFAULT_BN_EPSILON};
pub use train::{
    train, train_with, EpochStats, LrSchedule, Optimizer, TrainConfig, TrainOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Aborted(String),
}
