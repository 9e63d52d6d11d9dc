//! Ground-truth assignment, the association loss and the training loop.

mod assign;
mod loss;
mod trainer;

pub use assign::{assign_gt, ClipAssignment, ASSIGN_IOU};
pub use loss::{association_loss, association_loss_value, clip_loss, loss_indices, uniform_loss, ClipFeatures};
pub use trainer::{sample_clip, train, train_from, write_loss_log, IterationLog, TrainConfig, TrainOutcome, TrainingClip};
