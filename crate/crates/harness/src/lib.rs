//! Experiment harness for distributed transfer learning: dataset and config
//! plumbing, checkpoint serialization, report rendering and the CLI command
//! implementations.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod inspect;
pub mod report;

pub use error::{HarnessError, Result};
