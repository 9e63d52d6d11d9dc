//! Dense `f64` tensors, a define-by-run reverse-mode graph, AdamW and a
//! finite-difference gradient checker. Sized for a small attention head.

mod attention;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use attention::{multi_head_attention, AttentionParams, LinearParams};
pub use gradcheck::finite_diff_check;
pub use graph::{group_slot, Gradients, Graph, Var};
pub use optim::{adamw_step, AdamWConfig, StepStats};
pub use params::{Checkpoint, NamedArray, Param, ParamId, ParamStore, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tensor::Tensor;

pub(crate) use tensor::stable_sum;
