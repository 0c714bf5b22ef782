//! Config-driven experiment runner: synthetic data, maximum-likelihood fits,
//! confidence regions, geodesics, curvature and likelihood grids, figures.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod render;

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
