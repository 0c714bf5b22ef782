use thiserror::Error;

use crate::odeint::OdeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} violates bound {bound}")]
    Domain {
        name: String,
        value: f64,
        bound: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("singular Fisher metric (condition number {condition:.3e})")]
    SingularMetric { condition: f64 },

    #[error("metric is not positive definite at {theta:?}")]
    IndefiniteMetric { theta: Vec<f64> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that come from the numerics rather than from bad
    /// inputs: integrator breakdown, optimizer failure, degenerate metrics.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integration(_)
                | Error::Optimization(_)
                | Error::SingularMetric { .. }
                | Error::IndefiniteMetric { .. }
        )
    }
}
