//! Log-likelihood, maximum-likelihood fitting and likelihood-based
//! confidence regions for models with constant-σ normal observation noise.

mod chi2;
mod contour;
mod kl;
mod optimize;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{solve_values, ModelSpec, ParameterPoint};

pub use chi2::{chi2_cdf, chi2_quantile, confidence_threshold, gamma_p};
pub use contour::{trace_confidence_contour, ContourOptions, ContourPolyline};
pub use kl::{kl_divergence_monte_carlo, kl_divergence_normal, Normal};
pub use optimize::{mle, mle_with, nelder_mead, MleOptions, MleResult, NelderMeadReport};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Observation times and replicate counts of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub times: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Design {
    pub fn new(times: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if times.is_empty() || times.len() != counts.len() {
            return Err(Error::invalid("design needs one count per time and at least one time"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
            return Err(Error::invalid("design times must be non-negative and strictly increasing"));
        }
        if counts.contains(&0) {
            return Err(Error::invalid("every time point needs at least one observation"));
        }
        Ok(Self { times, counts })
    }

    /// Same number of replicates at every time.
    pub fn uniform(times: Vec<f64>, n: usize) -> Result<Self> {
        let counts = vec![n; times.len()];
        Self::new(times, counts)
    }

    pub fn scaled(&self, factor: usize) -> Self {
        Self {
            times: self.times.clone(),
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Observations `x_i(t_j)`: for each time a block of `N_j` replicate rows,
/// one column per observed species.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    times: Vec<f64>,
    species: Vec<String>,
    observations: Vec<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn new(times: Vec<f64>, species: Vec<String>, observations: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if times.is_empty() || times.len() != observations.len() {
            return Err(Error::invalid("one observation block per time is required"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("dataset times must be strictly increasing"));
        }
        if species.is_empty() {
            return Err(Error::invalid("dataset needs at least one species"));
        }
        for (j, block) in observations.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::invalid(format!("no observations at time index {j}")));
            }
            if block.iter().any(|row| row.len() != species.len()) {
                return Err(Error::invalid(format!(
                    "observation rows at time index {j} must have {} columns",
                    species.len()
                )));
            }
            if block.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite observation at time index {j}")));
            }
        }
        Ok(Self {
            times,
            species,
            observations,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    /// `observations()[j][i][m]`: replicate `i` of species `m` at `times[j]`.
    pub fn observations(&self) -> &[Vec<Vec<f64>>] {
        &self.observations
    }

    pub fn counts(&self) -> Vec<usize> {
        self.observations.iter().map(Vec::len).collect()
    }

    pub fn design(&self) -> Design {
        Design {
            times: self.times.clone(),
            counts: self.counts(),
        }
    }

    pub fn total_observations(&self) -> usize {
        self.counts().iter().sum::<usize>() * self.species.len()
    }

    /// Pools the replicates of two datasets on the same times and species.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.times != other.times || self.species != other.species {
            return Err(Error::invalid("datasets must share times and species to be pooled"));
        }
        let observations = self
            .observations
            .iter()
            .zip(&other.observations)
            .map(|(a, b)| a.iter().chain(b).cloned().collect())
            .collect();
        Dataset::new(self.times.clone(), self.species.clone(), observations)
    }

    /// CSV with header `time,species,replicate,value`, rows ordered by time,
    /// then species, then replicate.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["time", "species", "replicate", "value"])?;
        for (t, block) in self.times.iter().zip(&self.observations) {
            for (m, name) in self.species.iter().enumerate() {
                for (i, row) in block.iter().enumerate() {
                    w.write_record([t.to_string(), name.clone(), i.to_string(), row[m].to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["time", "species", "replicate", "value"] {
            return Err(Error::Format(format!(
                "expected header time,species,replicate,value, found {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut species: Vec<String> = Vec::new();
        // (time index, species, replicate, value)
        let mut entries: Vec<(usize, String, usize, f64)> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<&str> {
                rec.get(k)
                    .ok_or_else(|| Error::Format(format!("row {} has too few fields", line + 2)))
            };
            let t: f64 = parse(0)?
                .parse()
                .map_err(|_| Error::Format(format!("bad time on row {}", line + 2)))?;
            let sp = parse(1)?.to_string();
            let rep: usize = parse(2)?
                .parse()
                .map_err(|_| Error::Format(format!("bad replicate on row {}", line + 2)))?;
            let v: f64 = parse(3)?
                .parse()
                .map_err(|_| Error::Format(format!("bad value on row {}", line + 2)))?;
            let j = match times.iter().position(|&x| x == t) {
                Some(j) => j,
                None => {
                    if times.last().is_some_and(|&last| t < last) {
                        return Err(Error::Format("rows must be ordered by increasing time".into()));
                    }
                    times.push(t);
                    times.len() - 1
                }
            };
            if !species.contains(&sp) {
                species.push(sp.clone());
            }
            entries.push((j, sp, rep, v));
        }
        if times.is_empty() {
            return Err(Error::Format("dataset file has no rows".into()));
        }
        let mut observations: Vec<Vec<Vec<f64>>> = vec![Vec::new(); times.len()];
        for (j, block) in observations.iter_mut().enumerate() {
            let n = entries.iter().filter(|e| e.0 == j).map(|e| e.2 + 1).max().unwrap_or(0);
            *block = vec![vec![f64::NAN; species.len()]; n];
        }
        for (j, sp, rep, v) in entries {
            let m = species.iter().position(|s| *s == sp).unwrap();
            let cell = &mut observations[j][rep][m];
            if !cell.is_nan() {
                return Err(Error::Format(format!("duplicate entry for {sp} replicate {rep}")));
            }
            *cell = v;
        }
        if observations.iter().flatten().flatten().any(|v| v.is_nan()) {
            return Err(Error::Format("every replicate needs a value for every species".into()));
        }
        Dataset::new(times, species, observations)
    }
}

fn check_species(spec: &ModelSpec, data: &Dataset) -> Result<()> {
    if spec.species() != data.species() {
        return Err(Error::invalid(format!(
            "data species {:?} do not match model species {:?}",
            data.species(),
            spec.species()
        )));
    }
    Ok(())
}

/// `ℓ(θ) = Σ_j Σ_i Σ_m log φ(x_im(t_j); μ_m(θ, t_j), σ²)`.
pub fn log_likelihood(spec: &ModelSpec, theta: &ParameterPoint, data: &Dataset) -> Result<f64> {
    spec.check(theta)?;
    log_likelihood_values(spec, theta.values(), data)
}

/// [`log_likelihood`] on raw inferred values.
pub fn log_likelihood_values(spec: &ModelSpec, values: &[f64], data: &Dataset) -> Result<f64> {
    check_species(spec, data)?;
    let out = solve_values(spec, values, data.times())?;
    let sigma = out.sigma;
    if !(sigma > 0.0) {
        return Err(Error::Domain {
            name: "sigma".into(),
            value: sigma,
            bound: "(0, inf)".into(),
        });
    }
    let log_norm = -0.5 * LN_2PI - sigma.ln();
    let inv_two_var = 0.5 / (sigma * sigma);
    let mut total = 0.0;
    for (mu, block) in out.means.iter().zip(data.observations()) {
        for row in block {
            for (x, m) in row.iter().zip(mu) {
                let r = x - m;
                total += log_norm - r * r * inv_two_var;
            }
        }
    }
    Ok(total)
}

/// `ℓ̂(θ) = ℓ(θ) − ℓ(θ̂)`.
pub fn normalized_log_likelihood(
    spec: &ModelSpec,
    theta: &ParameterPoint,
    data: &Dataset,
    mle: &MleResult,
) -> Result<f64> {
    Ok(log_likelihood(spec, theta, data)? - mle.loglik_at_mle)
}

pub fn normalized_log_likelihood_values(
    spec: &ModelSpec,
    values: &[f64],
    data: &Dataset,
    mle: &MleResult,
) -> Result<f64> {
    Ok(log_likelihood_values(spec, values, data)? - mle.loglik_at_mle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;

    fn normal_spec() -> ModelSpec {
        ModelSpec::build(Family::UnivariateNormal, &[], &["mu", "sigma"], &["x"]).unwrap()
    }

    fn one_time(values: &[f64]) -> Dataset {
        Dataset::new(
            vec![0.0],
            vec!["x".into()],
            vec![values.iter().map(|v| vec![*v]).collect()],
        )
        .unwrap()
    }

    #[test]
    fn density_at_mean() {
        let spec = normal_spec();
        let sigma = 0.7;
        let theta = spec.point(vec![1.3, sigma]).unwrap();
        let ll = log_likelihood(&spec, &theta, &one_time(&[1.3])).unwrap();
        let expected = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((ll - expected).abs() < 1e-14);
    }

    #[test]
    fn additive_over_observations() {
        let spec = normal_spec();
        let theta = spec.point(vec![0.2, 1.1]).unwrap();
        let a = log_likelihood(&spec, &theta, &one_time(&[0.5])).unwrap();
        let b = log_likelihood(&spec, &theta, &one_time(&[-0.4])).unwrap();
        let ab = log_likelihood(&spec, &theta, &one_time(&[0.5, -0.4])).unwrap();
        assert!((a + b - ab).abs() < 1e-12);
    }

    #[test]
    fn species_mismatch_rejected() {
        let spec = normal_spec();
        let theta = spec.point(vec![0.0, 1.0]).unwrap();
        let data = Dataset::new(vec![0.0], vec!["y".into()], vec![vec![vec![1.0]]]).unwrap();
        assert!(log_likelihood(&spec, &theta, &data).is_err());
    }

    #[test]
    fn non_positive_sigma_is_domain_error() {
        let spec = normal_spec();
        let theta = spec.point(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            log_likelihood(&spec, &theta, &one_time(&[1.0])),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::new(vec![1.0, 0.5], vec!["x".into()], vec![vec![vec![1.0]], vec![vec![1.0]]]).is_err());
        assert!(Dataset::new(vec![0.0], vec!["x".into()], vec![vec![vec![1.0, 2.0]]]).is_err());
        assert!(Dataset::new(vec![0.0], vec!["x".into()], vec![vec![]]).is_err());
        assert!(Design::new(vec![0.0, 1.0], vec![1, 0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let data = Dataset::new(
            vec![4.0, 7.0],
            vec!["S".into(), "I".into()],
            vec![
                vec![vec![0.9, 0.05], vec![0.91, 0.04]],
                vec![vec![0.5, 0.3], vec![0.52, 0.31]],
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,species,replicate,value\n4,S,0,0.9\n4,S,1,0.91\n4,I,0,0.05\n"));
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn csv_rejects_bad_header_and_holes() {
        assert!(Dataset::read_csv("t,s,r,v\n0,x,0,1\n".as_bytes()).is_err());
        let holes = "time,species,replicate,value\n0,S,0,1\n0,I,0,1\n0,S,1,1\n";
        assert!(Dataset::read_csv(holes.as_bytes()).is_err());
    }
}
