//! Likelihood-based inference and Fisher-metric information geometry for
//! ODE and distributional models with two inferred parameters.
//!
//! The crate is organised bottom-up: [`odeint`] solves initial value
//! problems, [`models`] evaluates model means and their Jacobians,
//! [`likelihood`] fits and traces confidence regions, [`geometry`] computes
//! the Fisher metric, its curvature and geodesics, [`synth`] draws
//! reproducible synthetic data and [`gridscan`] evaluates scalar fields over
//! parameter grids.

pub mod error;
pub mod geometry;
pub mod gridscan;
pub mod likelihood;
pub mod models;
pub mod odeint;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{FisherMetric, MetricField};
pub use gridscan::{Axis, CellFailure, ScalarGrid};
pub use likelihood::{Dataset, Design, MleResult};
pub use models::{Family, ModelSpec, ParamBox, ParameterPoint};
