//! Pipeline orchestration for the trajectory-planning stack: configuration,
//! artifact layout, and the six stage commands. The binary in `main.rs` is a
//! thin argument-parsing shell over this library so integration tests can
//! drive stages in-process.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;
pub mod stats;
