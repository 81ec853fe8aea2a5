//! One module per pipeline command, plus shared artifact loaders.

pub mod common;
pub mod eval;
pub mod gen_data;
pub mod label;
pub mod train_rl;
pub mod train_rm;
pub mod train_wm;
