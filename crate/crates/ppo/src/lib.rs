//! Proximal policy optimisation over masked per-cube actions.

pub mod buffer;
pub mod dist;
pub mod gae;
pub mod loss;
pub mod optim;
pub mod train;

pub use buffer::RolloutBuffer;
pub use dist::{select_action, ActionMode, DistError, MaskedCategorical};
pub use gae::compute_gae;
pub use loss::{ppo_loss, LossCoefs, LossStats};
pub use optim::{clip_grad_norm, Adam};
pub use train::{
    latest_checkpoint, train, CheckpointEntry, PpoConfig, TrainError, TrainSummary, UpdateMetrics,
};
