//! Study orchestration over trainer plugins.
//!
//! Plugins speak newline-delimited JSON on stdin/stdout (see [`protocol`]).
//! The host performs a `hello` / `supported_hyperparameters` handshake,
//! restricts the search space accordingly, then drives trials: suggest,
//! `train`, collect `epoch` events, store the document, observe the final
//! epoch's accuracy.

pub mod protocol;

mod plugin;
mod reference;
mod serve;
mod study;

use std::time::Duration;

pub use plugin::{restrict_space, Launch, Plugin, PluginDescriptor, TrainOutcome, TrainerFactory};
pub use reference::{
    train_reference, Blobs, ReferencePrm, ReferenceTrainer, REFERENCE_HYPERPARAMETERS, REFERENCE_IN_SHAPE,
    REFERENCE_NN, REFERENCE_NN_CODE, REFERENCE_OUT_SHAPE,
};
pub use serve::{serve, StubTrainer, Trainer};
pub use study::{
    run_study, run_study_with, run_trial, summarize, transform_of, Checkpoint, StudyRun, StudySummary, TrialReport,
    CHECKPOINT_VERSION, DEFAULT_EPOCH_TIMEOUT,
};

use crate::registry::RegistryError;
use crate::tpe::TpeError;

/// Hyperparameter holding the transform name.
pub const TRANSFORM_PARAM: &str = "transform";
/// Transform used when a trial does not name one.
pub const DEFAULT_TRANSFORM: &str = "identity";
pub use crate::registry::IDENTITY_TRANSFORM_CODE;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot start plugin: {0}")]
    Spawn(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("{0}")]
    UnsupportedSpace(String),
    #[error("plugin handshake failed: {0}")]
    Handshake(Box<HarnessError>),
    #[error("plugin exited: {0}")]
    PluginExited(String),
    #[error("no plugin event within {0:?}")]
    Timeout(Duration),
    #[error("trial failed after {completed_epochs} epoch(s): {message}")]
    TrialFailed { message: String, completed_epochs: usize, plugin_alive: bool },
    #[error("invalid study: {0}")]
    InvalidRun(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Tpe(#[from] TpeError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
