//! Fisher information metric and the Riemannian geometry it induces on
//! parameter space.

mod curvature;
mod geodesic;
mod tensor;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood_values, Design};
use crate::models::{jacobian_values, ModelSpec, ParameterPoint};
use crate::synth::{generate, rng::keyed_bits, SynthConfig};

pub use curvature::{
    christoffel, christoffel_first_kind, curvature_at, ricci_tensor, riemann_tensor, scalar_curvature, TensorAtPoint,
};
pub use geodesic::{
    curve_length, geodesic_fan, geodesic_shoot, GeodesicCurve, GeodesicOptions, SampledPath,
};
pub use tensor::{Tensor3, Tensor4};

/// Relative central-difference step for metric derivatives.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Absolute floor on the metric derivative step.
pub const FD_ABS_FLOOR: f64 = 1e-7;
/// Metrics with a larger condition number are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// A field of symmetric positive-definite matrices over parameter space.
pub trait MetricField: Sync {
    fn dim(&self) -> usize;

    fn metric(&self, theta: &[f64]) -> Result<DMatrix<f64>>;

    fn fd_step(&self) -> f64 {
        DEFAULT_FD_STEP
    }

    /// Whether `theta` lies in the parameter domain.
    fn in_domain(&self, _theta: &[f64]) -> bool {
        true
    }
}

/// Fisher information of a model under a fixed observation design.
#[derive(Debug, Clone)]
pub struct FisherMetric {
    pub spec: ModelSpec,
    pub design: Design,
    pub fd_step: f64,
}

impl FisherMetric {
    pub fn new(spec: ModelSpec, design: Design) -> Self {
        Self {
            spec,
            design,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

impl MetricField for FisherMetric {
    fn dim(&self) -> usize {
        self.spec.n_params()
    }

    fn metric(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        fisher_matrix(&self.spec, &self.design, theta)
    }

    fn fd_step(&self) -> f64 {
        self.fd_step
    }

    fn in_domain(&self, theta: &[f64]) -> bool {
        self.spec.check_values(theta).is_ok()
    }
}

/// Metric `c · I`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMetric {
    pub dim: usize,
    pub scale: f64,
}

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim, self.dim) * self.scale)
    }
}

/// Metric given by a closure.
pub struct FnMetric<F> {
    pub dim: usize,
    pub f: F,
    pub fd_step: f64,
}

impl<F> FnMetric<F>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            f,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

impl<F> MetricField for FnMetric<F>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok((self.f)(theta))
    }

    fn fd_step(&self) -> f64 {
        self.fd_step
    }
}

/// `c · G` for any metric `G`.
pub struct ScaledMetric<'a, M: ?Sized> {
    pub inner: &'a M,
    pub scale: f64,
}

impl<M: MetricField + ?Sized> MetricField for ScaledMetric<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn metric(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.inner.metric(theta)? * self.scale)
    }

    fn fd_step(&self) -> f64 {
        self.inner.fd_step()
    }

    fn in_domain(&self, theta: &[f64]) -> bool {
        self.inner.in_domain(theta)
    }
}

/// Fisher information of the normal observation process,
/// `diag(N_j/σ² for every time j and species, [2ΣN/σ²])`, time-major. The
/// final σ entry is present only when σ is inferred; `ΣN` counts every
/// scalar observation.
pub fn observation_fim(sigma: f64, counts: &[usize], species_count: usize, sigma_inferred: bool) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Domain {
            name: "sigma".into(),
            value: sigma,
            bound: "(0, inf)".into(),
        });
    }
    if counts.is_empty() || counts.contains(&0) || species_count == 0 {
        return Err(Error::invalid("counts and species must be positive"));
    }
    let inv_var = 1.0 / (sigma * sigma);
    let mut diag: Vec<f64> = counts
        .iter()
        .flat_map(|&n| std::iter::repeat(n as f64 * inv_var).take(species_count))
        .collect();
    if sigma_inferred {
        let total: usize = counts.iter().sum::<usize>() * species_count;
        diag.push(2.0 * total as f64 * inv_var);
    }
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
}

/// Fisher information matrix together with its conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub condition: f64,
}

impl FisherMatrix {
    pub fn is_singular(&self) -> bool {
        !(self.condition <= SINGULAR_CONDITION)
    }
}

/// `I(θ) = J(θ)ᵀ 𝒪 J(θ)`.
pub fn fisher_metric(spec: &ModelSpec, design: &Design, theta: &ParameterPoint) -> Result<FisherMatrix> {
    spec.check(theta)?;
    let matrix = fisher_matrix(spec, design, theta.values())?;
    let condition = condition_number(&matrix);
    Ok(FisherMatrix { matrix, condition })
}

fn fisher_matrix(spec: &ModelSpec, design: &Design, values: &[f64]) -> Result<DMatrix<f64>> {
    let jac = jacobian_values(spec, values, &design.times)?;
    let obs = observation_fim(spec.sigma(values), &design.counts, spec.n_species(), spec.sigma_inferred())?;
    let mut g = jac.transpose() * obs * jac;
    symmetrize(&mut g);
    Ok(g)
}

fn symmetrize(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}

/// Ratio of extreme eigenvalues; infinite unless positive definite.
pub fn condition_number(g: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Monte-Carlo Fisher information: the sample mean of the outer product of
/// the score `∇ℓ(θ; X)` over `draws` synthetic datasets drawn at `theta`.
/// The score is taken by central differences.
pub fn monte_carlo_fisher(
    spec: &ModelSpec,
    design: &Design,
    theta: &ParameterPoint,
    draws: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    spec.check(theta)?;
    let nu = spec.n_params();
    let mut truth = spec.fixed().clone();
    for (n, v) in theta.names().iter().zip(theta.values()) {
        truth.insert(n.clone(), *v);
    }
    let x = theta.values();
    let mut acc = DMatrix::zeros(nu, nu);
    let mut score = vec![0.0; nu];
    for d in 0..draws {
        let data = generate(&SynthConfig {
            spec: spec.clone(),
            theta_true: truth.clone(),
            design: design.clone(),
            seed: keyed_bits(seed, &[d as u64]),
        })?;
        for k in 0..nu {
            let h = 1e-5 * x[k].abs().max(1e-3);
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            score[k] = (log_likelihood_values(spec, &up, &data)? - log_likelihood_values(spec, &down, &data)?) / (2.0 * h);
        }
        for a in 0..nu {
            for b in 0..nu {
                acc[(a, b)] += score[a] * score[b];
            }
        }
    }
    Ok(acc / draws as f64)
}
