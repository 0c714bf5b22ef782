//! Geodesic shooting and curve length.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curvature::{connection, metric_and_inverse};
use super::MetricField;
use crate::error::{Error, Result};
use crate::odeint::{integrate_rk54, IvpProblem};

#[derive(Debug, Clone, Copy)]
pub struct GeodesicOptions {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10 }
    }
}

/// A unit-speed geodesic sampled at the integrator's steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicCurve {
    pub ts: Vec<f64>,
    pub params: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Accumulated metric length at each sample.
    pub lengths: Vec<f64>,
    pub target_length: f64,
    /// Initial direction angle on the Euclidean unit circle.
    pub angle: f64,
    /// Integration stopped before reaching the target length.
    pub truncated: bool,
    pub note: Option<String>,
}

impl GeodesicCurve {
    pub fn endpoint(&self) -> &[f64] {
        self.params.last().expect("geodesic has at least one sample")
    }

    pub fn final_length(&self) -> f64 {
        *self.lengths.last().expect("geodesic has at least one sample")
    }

    /// `|vᵀ G(θ) v − 1|` at every sample.
    pub fn speed_residuals(&self, metric: &dyn MetricField) -> Result<Vec<f64>> {
        self.params
            .iter()
            .zip(&self.velocities)
            .map(|(x, v)| {
                let g = metric.metric(x)?;
                Ok((quadratic_form(&g, v) - 1.0).abs())
            })
            .collect()
    }
}

fn quadratic_form(g: &nalgebra::DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[(i, j)] * v[i] * v[j];
        }
    }
    s
}

/// Solves the geodesic equation from `origin` in direction `angle` until
/// the accumulated metric length reaches `target_length`.
///
/// The initial velocity `(cos a, sin a)` is rescaled to unit metric speed,
/// so the curve parameter is arc length. The state carries the length as an
/// extra component and a terminal event stops at the target. A metric
/// failure or an exit from the parameter domain truncates the curve.
pub fn geodesic_shoot(
    metric: &dyn MetricField,
    origin: &[f64],
    angle: f64,
    target_length: f64,
    opts: &GeodesicOptions,
) -> Result<GeodesicCurve> {
    let n = metric.dim();
    if n != 2 || origin.len() != 2 {
        return Err(Error::invalid("geodesic shooting by angle needs a two-dimensional metric"));
    }
    if !(target_length > 0.0 && target_length.is_finite()) {
        return Err(Error::invalid(format!("target length {target_length} must be positive")));
    }
    if !metric.in_domain(origin) {
        return Err(Error::invalid(format!("origin {origin:?} lies outside the parameter domain")));
    }
    let (g0, _) = metric_and_inverse(metric, origin)?;
    let dir = [angle.cos(), angle.sin()];
    let speed = quadratic_form(&g0, &dir).sqrt();
    let v0 = [dir[0] / speed, dir[1] / speed];

    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> std::result::Result<(), String> {
        let theta = &y[0..n];
        let v = &y[n..2 * n];
        if !metric.in_domain(theta) {
            return Err(format!("left the parameter domain at {theta:?}"));
        }
        let conn = connection(metric, theta).map_err(|e| e.to_string())?;
        for m in 0..n {
            dy[m] = v[m];
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += conn.second[(m, i, j)] * v[i] * v[j];
                }
            }
            dy[n + m] = -acc;
        }
        let q = quadratic_form(&conn.g, v);
        dy[2 * n] = q.max(0.0).sqrt();
        Ok(())
    };
    let mut y0 = origin.to_vec();
    y0.extend_from_slice(&v0);
    y0.push(0.0);
    let problem = IvpProblem::new(rhs, y0, (0.0, 2.0 * target_length + 1e-12))?
        .with_event(move |_t, y: &[f64]| y[2 * n] - target_length);

    let (traj, note) = match integrate_rk54(&problem, opts.rtol, opts.atol) {
        Ok(traj) if traj.terminated_by_event => (traj, None),
        Ok(traj) => (traj, Some("target length not reached within the integration span".to_string())),
        Err(e) => {
            let note = e.to_string();
            match e.into_partial() {
                Some(traj) => (traj, Some(note)),
                None => return Err(Error::invalid(note)),
            }
        }
    };
    Ok(GeodesicCurve {
        params: traj.ys.iter().map(|y| y[0..n].to_vec()).collect(),
        velocities: traj.ys.iter().map(|y| y[n..2 * n].to_vec()).collect(),
        lengths: traj.ys.iter().map(|y| y[2 * n]).collect(),
        ts: traj.ts,
        target_length,
        angle,
        truncated: note.is_some(),
        note,
    })
}

/// `count` geodesics with equally spaced initial angles `2πk/count`,
/// computed in parallel.
pub fn geodesic_fan(
    metric: &dyn MetricField,
    origin: &[f64],
    count: usize,
    target_length: f64,
    opts: &GeodesicOptions,
) -> Result<Vec<GeodesicCurve>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            geodesic_shoot(metric, origin, angle, target_length, opts)
        })
        .collect()
}

/// Points `θ(t)` with velocities `θ'(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub ts: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl SampledPath {
    pub fn new(ts: Vec<f64>, points: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>) -> Result<Self> {
        if ts.len() < 2 || ts.len() != points.len() || ts.len() != velocities.len() {
            return Err(Error::invalid("a path needs at least two samples with matching velocities"));
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("path parameter must be strictly increasing"));
        }
        Ok(Self { ts, points, velocities })
    }

    /// Velocities from second-order finite differences of the points.
    pub fn from_points(ts: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        let n = ts.len();
        if n < 2 || points.len() != n {
            return Err(Error::invalid("a path needs at least two samples"));
        }
        let dim = points[0].len();
        let velocities = (0..n)
            .map(|k| {
                (0..dim)
                    .map(|d| {
                        if n == 2 {
                            return (points[1][d] - points[0][d]) / (ts[1] - ts[0]);
                        }
                        // three-point stencil on a possibly non-uniform grid
                        let (a, b, c) = match k {
                            0 => (0, 1, 2),
                            k if k == n - 1 => (n - 3, n - 2, n - 1),
                            k => (k - 1, k, k + 1),
                        };
                        let (ta, tb, tc, t) = (ts[a], ts[b], ts[c], ts[k]);
                        let (ya, yb, yc) = (points[a][d], points[b][d], points[c][d]);
                        ya * (2.0 * t - tb - tc) / ((ta - tb) * (ta - tc))
                            + yb * (2.0 * t - ta - tc) / ((tb - ta) * (tb - tc))
                            + yc * (2.0 * t - ta - tb) / ((tc - ta) * (tc - tb))
                    })
                    .collect()
            })
            .collect();
        Self::new(ts, points, velocities)
    }

    /// The same path traversed backwards.
    pub fn reversed(&self) -> Self {
        let t_end = *self.ts.last().unwrap();
        let t_start = self.ts[0];
        Self {
            ts: self.ts.iter().rev().map(|t| t_end + t_start - t).collect(),
            points: self.points.iter().rev().cloned().collect(),
            velocities: self
                .velocities
                .iter()
                .rev()
                .map(|v| v.iter().map(|x| -x).collect())
                .collect(),
        }
    }
}

impl From<&GeodesicCurve> for SampledPath {
    fn from(c: &GeodesicCurve) -> Self {
        Self {
            ts: c.ts.clone(),
            points: c.params.clone(),
            velocities: c.velocities.clone(),
        }
    }
}

/// `∫ √(θ'ᵀ G(θ) θ') dt` by composite Simpson on the (possibly non-uniform)
/// samples.
pub fn curve_length(metric: &dyn MetricField, path: &SampledPath) -> Result<f64> {
    let f: Vec<f64> = path
        .points
        .iter()
        .zip(&path.velocities)
        .map(|(x, v)| {
            let g = metric.metric(x)?;
            let q = quadratic_form(&g, v);
            if q < 0.0 || !q.is_finite() {
                return Err(Error::IndefiniteMetric { theta: x.clone() });
            }
            Ok(q.sqrt())
        })
        .collect::<Result<_>>()?;
    Ok(simpson_nonuniform(&path.ts, &f))
}

fn simpson_nonuniform(x: &[f64], f: &[f64]) -> f64 {
    let n = x.len() - 1;
    if n == 1 {
        return 0.5 * (x[1] - x[0]) * (f[0] + f[1]);
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut total = 0.0;
    let mut i = 0;
    while i + 1 < n {
        let (h0, h1) = (h[i], h[i + 1]);
        let hs = h0 + h1;
        total += hs / 6.0 * ((2.0 - h1 / h0) * f[i] + hs * hs / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
        i += 2;
    }
    if n % 2 == 1 {
        // last interval from the quadratic through the final three samples
        let (h0, h1) = (h[n - 2], h[n - 1]);
        let alpha = (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
        let beta = (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0);
        let eta = h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
        total += alpha * f[n] + beta * f[n - 1] - eta * f[n - 2];
    }
    total
}
