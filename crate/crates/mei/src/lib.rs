//! File formats, checkpoints and the `mei` command line on top of
//! [`mei_core`].

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{ConfigError, RunArgs, RunConfig};
pub use dataset::{Dataset, DatasetError, DatasetPaths};
