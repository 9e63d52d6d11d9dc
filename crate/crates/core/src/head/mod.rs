//! The association head: a one-layer encoder over all detection features
//! of a window, a one-layer decoder for trajectory queries, and the
//! per-frame association distributions built from its score matrix.

mod distribution;
mod forward;
mod params;
mod partition;

pub use distribution::{
    association_distribution, trajectory_loglik, AssociationDistribution, AssociationScores,
};
pub use forward::{positional_embedding, stack_rows, HeadOutput};
pub use params::{DecoderLayer, EncoderLayer, FeedForward, GtrParams, HeadConfig};
pub use partition::FramePartition;
