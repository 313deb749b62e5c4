//! Experiment plumbing: datasets, configuration files, the runner behind
//! the command-line tool, CSV artifacts and the gradient-check suite.

pub mod config;
pub mod gradsuite;
pub mod idx;
pub mod report;
pub mod runner;
pub mod synthetic;

pub use config::{DatasetSpec, ExperimentConfig, Preset, StudyConfig};
pub use synthetic::{make_synthetic, SyntheticKind};
