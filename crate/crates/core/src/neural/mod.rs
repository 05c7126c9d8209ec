//! The learned superposition operator.

pub mod model;
pub mod predict;
pub mod train;

pub use model::{default_layer_sizes, init_model, param_count, Activation, MlpModel, Standardization};
pub use predict::{predict_superposed, predict_superposed_batch};
pub use train::{
    accumulate_gradient, evaluate_loss, loss, loss_and_gradient, loss_on_grid, train, train_with_observer,
    BatchExecutor, EpochRecord, LossParts, SerialExecutor, TrainConfig, TrainData, TrainFailure, TrainOutcome,
};
