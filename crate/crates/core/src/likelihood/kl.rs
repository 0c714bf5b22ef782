//! Kullback–Leibler divergence between univariate normals.

use crate::error::{Error, Result};
use crate::synth::rng::keyed_normal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal {
    pub mean: f64,
    pub sd: f64,
}

impl Normal {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) || !mean.is_finite() {
            return Err(Error::Domain {
                name: "sd".into(),
                value: sd,
                bound: "(0, inf)".into(),
            });
        }
        Ok(Self { mean, sd })
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// `D_KL(p ‖ q) = log(σ_q/σ_p) + (σ_p² + (μ_p − μ_q)²) / (2σ_q²) − 1/2`.
pub fn kl_divergence_normal(p: Normal, q: Normal) -> f64 {
    let d = p.mean - q.mean;
    (q.sd / p.sd).ln() + (p.sd * p.sd + d * d) / (2.0 * q.sd * q.sd) - 0.5
}

/// Monte-Carlo estimate of `E_p[log p − log q]` from `draws` keyed draws.
/// Returns the estimate and its standard error.
pub fn kl_divergence_monte_carlo(p: Normal, q: Normal, draws: usize, seed: u64) -> Result<(f64, f64)> {
    if draws < 2 {
        return Err(Error::invalid("need at least two draws"));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..draws {
        let x = p.mean + p.sd * keyed_normal(seed, &[i as u64]);
        let v = p.log_density(x) - q.log_density(x);
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (draws - 1) as f64;
    Ok((mean, (var / draws as f64).sqrt()))
}
