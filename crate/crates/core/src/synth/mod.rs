//! Synthetic observations: normal noise about model means.

pub mod rng;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::likelihood::{Dataset, Design};
use crate::models::{solve_values, ModelSpec, SIGMA};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub spec: ModelSpec,
    /// Every parameter of the family. σ may be 0 for noise-free data.
    pub theta_true: BTreeMap<String, f64>,
    pub design: Design,
    pub seed: u64,
}

/// Means at the true parameters, with the noise level returned separately
/// so that σ = 0 is allowed here.
pub fn true_means(spec: &ModelSpec, theta_true: &BTreeMap<String, f64>, times: &[f64]) -> Result<(Vec<Vec<f64>>, f64)> {
    let family = spec.family();
    for p in family.parameters() {
        if !theta_true.contains_key(*p) {
            return Err(Error::invalid(format!("true value of `{p}` is missing")));
        }
    }
    let sigma = theta_true[SIGMA];
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain {
            name: SIGMA.into(),
            value: sigma,
            bound: "[0, inf)".into(),
        });
    }
    // the means do not depend on σ, so evaluate with a placeholder
    let placeholder = |name: &str, v: f64| if name == SIGMA { 1.0 } else { v };
    let fixed: BTreeMap<String, f64> = theta_true
        .iter()
        .filter(|(k, _)| !spec.inferred().contains(k))
        .map(|(k, v)| (k.clone(), placeholder(k, *v)))
        .collect();
    let eval_spec = ModelSpec::new(
        family,
        fixed,
        spec.inferred().to_vec(),
        spec.species().to_vec(),
        spec.initial_conditions().clone(),
    )?;
    let values: Vec<f64> = spec
        .inferred()
        .iter()
        .map(|n| placeholder(n, theta_true[n]))
        .collect();
    Ok((solve_values(&eval_spec, &values, times)?.means, sigma))
}

/// Draws `x = μ_m(Θ, t_j) + σ z` for every time `j`, species `m` and
/// replicate `i`, with `z` keyed by `(seed, j, m, i)`.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    let design = &config.design;
    let (means, sigma) = true_means(&config.spec, &config.theta_true, &design.times)?;
    let m_count = config.spec.n_species();
    let observations = means
        .iter()
        .zip(&design.counts)
        .enumerate()
        .map(|(j, (mu, &n))| {
            (0..n)
                .map(|i| {
                    (0..m_count)
                        .map(|m| {
                            if sigma == 0.0 {
                                mu[m]
                            } else {
                                mu[m] + sigma * rng::keyed_normal(config.seed, &[j as u64, m as u64, i as u64])
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Dataset::new(design.times.clone(), config.spec.species().to_vec(), observations)
}
