//! Differentiable building blocks: named f32 parameters, a tape autodiff
//! over f64 vectors, dense stacks, single-head cross-attention, AdamW, and
//! binary checkpoints.
//!
//! The split of precisions is deliberate: parameters and optimizer moments
//! live in f32 (compact, checkpoint-stable), while every forward/backward
//! operation and loss accumulation runs in f64 so gradient checks against
//! finite differences hold to tight tolerances.

mod attention;
mod checkpoint;
mod dense;
pub mod gradcheck;
mod optim;
mod param;
mod tape;

pub use attention::CrossAttentionBlock;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dense::{Activation, DenseNet};
pub use optim::AdamW;
pub use param::{Init, Param, ParamId, ParamStore};
pub use tape::{Grads, Tape, ValueId};
