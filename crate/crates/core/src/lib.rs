//! Benchmarking and experiment-registry engine for neural network training
//! runs: configuration parsing, TPE hyperparameter search, a SQLite result
//! registry, task metrics, statistics and report generation, and a
//! line-delimited JSON trainer plugin host.

pub mod config;
pub mod harness;
pub mod metrics;
pub mod prm;
pub mod registry;
pub mod report;
pub mod stats;
pub mod tpe;
