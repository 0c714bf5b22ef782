//! Levi-Civita connection and curvature of a metric field, from central
//! differences of the metric.
//!
//! Index conventions: `Γ_kij = g_km Γ^m_ij` is stored with the lowered index
//! first, and
//!
//! ```text
//! R_ijkl = ∂_k Γ_ijl − ∂_l Γ_ijk + Γ_ril Γ^r_jk − Γ_rik Γ^r_jl
//! Ric_ij = g^pm R_pimj
//! Sc     = g^ij Ric_ij
//! ```
//!
//! so that on a surface `Sc = 2 R_1212 / det G` and the normal family
//! `(μ, σ)` has `Sc = −1`.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use super::{MetricField, Tensor3, Tensor4, FD_ABS_FLOOR, SINGULAR_CONDITION};
use crate::error::{Error, Result};

fn step(metric: &dyn MetricField, x: f64) -> f64 {
    (metric.fd_step() * x.abs()).max(FD_ABS_FLOOR)
}

fn positive_definite(metric: &dyn MetricField, theta: &[f64]) -> Result<DMatrix<f64>> {
    let g = metric.metric(theta)?;
    if g.iter().any(|v| !v.is_finite()) || Cholesky::new(g.clone()).is_none() {
        return Err(Error::IndefiniteMetric { theta: theta.to_vec() });
    }
    Ok(g)
}

/// Metric and its inverse at a base point; singular metrics are rejected.
pub(crate) fn metric_and_inverse(metric: &dyn MetricField, theta: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let g = metric.metric(theta)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::IndefiniteMetric { theta: theta.to_vec() });
    }
    let eig = SymmetricEigen::new(g.clone());
    let (min, max) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(max > 0.0) {
        return Err(Error::SingularMetric { condition: f64::INFINITY });
    }
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::SingularMetric { condition });
    }
    let inv = Cholesky::new(g.clone())
        .ok_or_else(|| Error::IndefiniteMetric { theta: theta.to_vec() })?
        .inverse();
    Ok((g, inv))
}

/// `∂g/∂θ_l` for every `l`, central differences.
fn metric_derivatives(metric: &dyn MetricField, theta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    (0..theta.len())
        .map(|l| {
            let h = step(metric, theta[l]);
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[l] += h;
            down[l] -= h;
            let gp = positive_definite(metric, &up)?;
            let gm = positive_definite(metric, &down)?;
            Ok((gp - gm) / (2.0 * h))
        })
        .collect()
}

/// `Γ_kij = ½(∂_i g_kj + ∂_j g_ki − ∂_k g_ij)`.
pub fn christoffel_first_kind(metric: &dyn MetricField, theta: &[f64]) -> Result<Tensor3> {
    let n = metric.dim();
    let dg = metric_derivatives(metric, theta)?;
    let mut first = Tensor3::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                first[(k, i, j)] = 0.5 * (dg[i][(k, j)] + dg[j][(k, i)] - dg[k][(i, j)]);
            }
        }
    }
    Ok(first)
}

fn raise(ginv: &DMatrix<f64>, first: &Tensor3) -> Tensor3 {
    let n = first.dim();
    let mut second = Tensor3::zeros(n);
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                second[(m, i, j)] = (0..n).map(|k| ginv[(m, k)] * first[(k, i, j)]).sum();
            }
        }
    }
    second
}

pub(crate) struct Connection {
    pub g: DMatrix<f64>,
    pub second: Tensor3,
}

pub(crate) fn connection(metric: &dyn MetricField, theta: &[f64]) -> Result<Connection> {
    let (g, ginv) = metric_and_inverse(metric, theta)?;
    let first = christoffel_first_kind(metric, theta)?;
    Ok(Connection {
        g,
        second: raise(&ginv, &first),
    })
}

/// Christoffel symbols of the second kind, indexed `[m][i][j]` for `Γ^m_ij`.
pub fn christoffel(metric: &dyn MetricField, theta: &[f64]) -> Result<Tensor3> {
    Ok(connection(metric, theta)?.second)
}

/// Connection and curvature tensors at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorAtPoint {
    pub metric: DMatrix<f64>,
    /// `Γ^m_ij` at `[m][i][j]`.
    pub christoffel2: Tensor3,
    /// `Γ_kij` at `[k][i][j]`.
    pub christoffel1: Tensor3,
    pub riemann: Tensor4,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

/// Every curvature quantity at `theta`. The outer derivatives in the
/// Riemann tensor difference first-kind symbols evaluated at shifted points,
/// so the metric is probed on a nested stencil.
pub fn curvature_at(metric: &dyn MetricField, theta: &[f64]) -> Result<TensorAtPoint> {
    let n = metric.dim();
    if theta.len() != n {
        return Err(Error::invalid(format!("point has {} coordinates, metric has {n}", theta.len())));
    }
    let (g, ginv) = metric_and_inverse(metric, theta)?;
    let first = christoffel_first_kind(metric, theta)?;
    let second = raise(&ginv, &first);

    // d_first[k] = ∂_k Γ_···
    let d_first: Vec<Tensor3> = (0..n)
        .map(|k| {
            let h = step(metric, theta[k]);
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[k] += h;
            down[k] -= h;
            let fp = christoffel_first_kind(metric, &up)?;
            let fm = christoffel_first_kind(metric, &down)?;
            let mut d = Tensor3::zeros(n);
            for (idx, (a, b)) in fp.as_slice().iter().zip(fm.as_slice()).enumerate() {
                let (x, rest) = (idx / (n * n), idx % (n * n));
                d[(x, rest / n, rest % n)] = (a - b) / (2.0 * h);
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;

    let mut riemann = Tensor4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = d_first[k][(i, j, l)] - d_first[l][(i, j, k)];
                    for r in 0..n {
                        v += first[(r, i, l)] * second[(r, j, k)] - first[(r, i, k)] * second[(r, j, l)];
                    }
                    riemann[(i, j, k, l)] = v;
                }
            }
        }
    }

    let mut ricci = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for p in 0..n {
                for m in 0..n {
                    v += ginv[(p, m)] * riemann[(p, i, m, j)];
                }
            }
            ricci[(i, j)] = v;
        }
    }
    let scalar = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| ginv[(i, j)] * ricci[(i, j)])
        .sum();

    Ok(TensorAtPoint {
        metric: g,
        christoffel2: second,
        christoffel1: first,
        riemann,
        ricci,
        scalar,
    })
}

pub fn riemann_tensor(metric: &dyn MetricField, theta: &[f64]) -> Result<Tensor4> {
    Ok(curvature_at(metric, theta)?.riemann)
}

pub fn ricci_tensor(metric: &dyn MetricField, theta: &[f64]) -> Result<DMatrix<f64>> {
    Ok(curvature_at(metric, theta)?.ricci)
}

pub fn scalar_curvature(metric: &dyn MetricField, theta: &[f64]) -> Result<f64> {
    Ok(curvature_at(metric, theta)?.scalar)
}
