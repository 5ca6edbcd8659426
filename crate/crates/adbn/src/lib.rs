//! Standard-library companion to `adbn-core`: CIFAR-10 loading, ZCA
//! whitening, checkpoints, text formats, experiment configuration and the
//! `adbn` command line.

pub mod checkpoint;
pub mod cifar;
pub mod commands;
pub mod config;
mod error;
pub mod formats;
pub mod zca;

pub use config::{DatasetSpec, ExperimentConfig};
pub use error::{AdbnError, Result};
