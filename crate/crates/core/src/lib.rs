//! Tabular laboratory for reinforcement learning with verifiable rewards:
//! softmax policies over enumerated trajectories, group-relative advantages,
//! decoupled confidence training, calibration metrics and exact checks of
//! the accuracy/calibration gradient geometry.

pub mod advantage;
pub mod calibration;
pub mod error;
pub mod policy;
pub mod rewards;
pub mod taskenv;
pub mod theory;
pub mod trainer;

pub use error::{LabError, Result};
