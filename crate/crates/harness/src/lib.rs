//! Experiment harness for the tabular calibration lab: JSON configs,
//! presets, the variant x seed runner, the theory certificate suite and the
//! `dcpo-lab` command line.

pub mod certify;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod records;

pub use error::{HarnessError, Result};
