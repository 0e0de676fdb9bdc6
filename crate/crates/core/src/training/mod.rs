//! RMSProp optimisation with training-time ingredient noise, per-epoch
//! validation and best-checkpoint selection.

mod optim;
mod predictor;
mod trainer;

pub use optim::{Algorithm, OptimizerConfig, RmsProp};
pub use predictor::{IngredientMode, ModelPredictor};
pub use trainer::{
    train, train_model, validate, validate_model, EpochRecord, InitMode, Precision, TrainConfig,
    TrainData, TrainOutcome,
};
