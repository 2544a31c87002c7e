//! Declarative experiment runner for the IFP-based and derivative-feedback flows.

pub mod builtins;
pub mod config;
pub mod experiment;

pub use experiment::{Experiment, ExperimentError, Overrides};

/// JSON description of the config file and the artifact keys.
pub const SCHEMA: &str = include_str!("../schema.json");
