//! Adaptive structural learning for Restricted Boltzmann Machines and Deep
//! Belief Networks, plus knowledge acquisition from the trained stack.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs and an explicit [`RngStream`]; file formats, the
//! CIFAR-10 loader and the command line live in the `adbn` companion crate.
//!
//! ## Layout
//!
//! - [`rbm`]: energy, partition function, conditionals, CD-k and the exact
//!   enumeration oracle
//! - [`adaptive`]: Walking-Distance statistics, neuron generation and
//!   annihilation, forgetting penalties, the three-phase adaptive trainer
//! - [`dbn`]: layer stacking with the layer-generation condition, softmax head
//! - [`knowledge`]: fire condition, path graphs, IF-THEN rule mining and
//!   rule-embedded inference
//! - [`dataset`]: labeled datasets and the synthetic desk-scale generators

#![no_std]

extern crate alloc;

pub mod adaptive;
pub mod dataset;
pub mod dbn;
mod error;
pub mod knowledge;
pub mod math;
mod matrix;
pub mod rbm;
mod rng;

pub use adaptive::{
    AdaptiveConfig, EpochRecord, ForgettingPhase, GradientStats, StructuralEvent, TrainingHyperparams,
    TrainingLog,
};
pub use dataset::LabeledDataset;
pub use dbn::{ClassifierHead, DbnModel, DbnTrainingLog, LayerGenConfig, LayerStats};
pub use error::{Error, Result};
pub use knowledge::{FiringTrace, MiningConfig, PathEdge, PathGraph, Rule, RuleEvaluation};
pub use matrix::Matrix;
pub use rbm::{BinaryVector, GradientEstimate, RbmParams, ENUMERATION_LIMIT};
pub use rng::RngStream;
