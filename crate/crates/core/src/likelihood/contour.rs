//! Tracing the Wilks level set `ℓ̂(θ) = −Δ/2` of a two-parameter likelihood.
//!
//! A seed on the level set is found by bisection along `+θ₁` from the MLE.
//! The curve is then followed with Heun steps along the rotated unit
//! gradient, each step projected back onto the level set by Newton
//! corrections along the gradient. Tracing stops when the curve returns to
//! the seed (closed region) or leaves the box (open region); an open curve is
//! traced in both directions from the seed.

use serde::{Deserialize, Serialize};

use super::{confidence_threshold, log_likelihood_values, Dataset, MleResult};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, ParamBox};
use crate::odeint::heun_step;

const GRAD_REL_STEP: f64 = 1e-6;
const GRAD_ABS_STEP: f64 = 1e-9;
const SEED_TOL: f64 = 1e-8;
const PROJECTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ContourOptions {
    /// Region in which the contour is traced; leaving it marks the region open.
    pub bounds: ParamBox,
    /// Upper bound on steps per tracing direction.
    pub max_steps: usize,
    /// Steps move at most `diagonal / steps_per_diagonal`.
    pub steps_per_diagonal: f64,
}

impl ContourOptions {
    pub fn new(bounds: ParamBox) -> Self {
        Self {
            bounds,
            max_steps: 200_000,
            steps_per_diagonal: 400.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourPolyline {
    pub points: Vec<[f64; 2]>,
    /// The curve returned to its seed.
    pub closed: bool,
    /// No closed level set was found in the box: practical
    /// non-identifiability at this confidence level.
    pub open_region: bool,
    /// Target value of the normalised log-likelihood.
    pub level: f64,
    pub seed: Option<[f64; 2]>,
    pub step: f64,
    pub note: Option<String>,
}

struct Surface<'a> {
    spec: &'a ModelSpec,
    data: &'a Dataset,
    offset: f64,
}

impl Surface<'_> {
    /// `ℓ̂(θ) − level`: positive inside the region.
    fn value(&self, x: [f64; 2]) -> Result<f64> {
        Ok(log_likelihood_values(self.spec, &x, self.data)? - self.offset)
    }

    fn gradient(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let mut g = [0.0; 2];
        for k in 0..2 {
            let h = (GRAD_REL_STEP * x[k].abs()).max(GRAD_ABS_STEP);
            let mut up = x;
            let mut down = x;
            up[k] += h;
            down[k] -= h;
            g[k] = (self.value(up)? - self.value(down)?) / (2.0 * h);
        }
        Ok(g)
    }

    /// Unit tangent of the level curve through `x`.
    fn tangent(&self, x: [f64; 2], orientation: f64) -> Result<[f64; 2]> {
        let g = self.gradient(x)?;
        let norm = g[0].hypot(g[1]);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Optimization(format!(
                "vanishing likelihood gradient at {x:?} while tracing contour"
            )));
        }
        Ok([-orientation * g[1] / norm, orientation * g[0] / norm])
    }

    fn project(&self, mut x: [f64; 2]) -> Result<([f64; 2], f64)> {
        let mut f = self.value(x)?;
        for _ in 0..30 {
            if f.abs() <= PROJECTION_TOL {
                break;
            }
            let g = self.gradient(x)?;
            let g2 = g[0] * g[0] + g[1] * g[1];
            if !(g2 > 0.0) {
                break;
            }
            let mut next = [x[0] - f * g[0] / g2, x[1] - f * g[1] / g2];
            let mut f_next = self.value(next)?;
            // damp if the Newton step overshoots
            let mut damping = 1.0;
            while f_next.abs() > f.abs() && damping > 1e-4 {
                damping *= 0.5;
                next = [x[0] - damping * f * g[0] / g2, x[1] - damping * f * g[1] / g2];
                f_next = self.value(next)?;
            }
            x = next;
            f = f_next;
        }
        Ok((x, f))
    }
}

enum Stop {
    Closed,
    LeftBox,
    StepLimit,
}

/// Traces the `alpha`-level likelihood confidence contour of a
/// two-parameter model around `mle`.
pub fn trace_confidence_contour(
    spec: &ModelSpec,
    data: &Dataset,
    mle: &MleResult,
    alpha: f64,
    opts: &ContourOptions,
) -> Result<ContourPolyline> {
    if spec.n_params() != 2 || opts.bounds.dim() != 2 {
        return Err(Error::invalid("contour tracing needs exactly two inferred parameters"));
    }
    let level = confidence_threshold(2, alpha)?;
    let surface = Surface {
        spec,
        data,
        offset: mle.loglik_at_mle + level,
    };
    let centre = [mle.theta_hat.values()[0], mle.theta_hat.values()[1]];
    let bx = &opts.bounds;
    if !bx.contains(&centre) {
        return Err(Error::invalid("the MLE lies outside the contour box"));
    }

    let open = |points: Vec<[f64; 2]>, seed: Option<[f64; 2]>, step: f64, note: &str| ContourPolyline {
        points,
        closed: false,
        open_region: true,
        level,
        seed,
        step,
        note: Some(note.to_string()),
    };

    // seed: march along +θ₁ with doubling steps, then bisect
    let width = bx.hi[0] - bx.lo[0];
    let mut inside = 0.0;
    let mut d = 1e-4 * width;
    let outside = loop {
        let x1 = centre[0] + d;
        if x1 >= bx.hi[0] {
            let edge = bx.hi[0] - centre[0];
            if surface.value([bx.hi[0], centre[1]])? < 0.0 {
                break edge;
            }
            return Ok(open(
                Vec::new(),
                None,
                0.0,
                "normalised log-likelihood stays above the threshold along +theta1 up to the box edge",
            ));
        }
        if surface.value([x1, centre[1]])? < 0.0 {
            break d;
        }
        inside = d;
        d *= 2.0;
    };
    let (mut lo, mut hi) = (inside, outside);
    let mut seed = [centre[0] + hi, centre[1]];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let x = [centre[0] + mid, centre[1]];
        let f = surface.value(x)?;
        seed = x;
        if f.abs() <= SEED_TOL || hi - lo <= 1e-15 * width {
            break;
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (seed, _) = surface.project(seed)?;

    let radius = (seed[0] - centre[0]).hypot(seed[1] - centre[1]);
    let step = (bx.diagonal() / opts.steps_per_diagonal).min(radius / 20.0);

    let trace = |orientation: f64| -> Result<(Vec<[f64; 2]>, Stop)> {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> std::result::Result<(), String> {
            let d = surface.tangent([y[0], y[1]], orientation).map_err(|e| e.to_string())?;
            dy.copy_from_slice(&d);
            Ok(())
        };
        let mut points = vec![seed];
        let mut x = seed;
        let mut travelled = 0.0;
        for _ in 0..opts.max_steps {
            let k1 = surface.tangent(x, orientation)?;
            let next = heun_step(rhs, 0.0, &x, &k1, step).map_err(Error::Optimization)?;
            let (next, _) = surface.project([next[0], next[1]])?;
            if !bx.contains(&next) {
                return Ok((points, Stop::LeftBox));
            }
            travelled += (next[0] - x[0]).hypot(next[1] - x[1]);
            x = next;
            let to_seed = (x[0] - seed[0]).hypot(x[1] - seed[1]);
            if travelled > 4.0 * step && to_seed <= step {
                points.push(seed);
                return Ok((points, Stop::Closed));
            }
            points.push(x);
        }
        Ok((points, Stop::StepLimit))
    };

    let (forward, stop) = trace(1.0)?;
    match stop {
        Stop::Closed => Ok(ContourPolyline {
            points: forward,
            closed: true,
            open_region: false,
            level,
            seed: Some(seed),
            step,
            note: None,
        }),
        Stop::LeftBox | Stop::StepLimit => {
            let (mut backward, _) = trace(-1.0)?;
            backward.reverse();
            backward.pop(); // seed appears in both arcs
            backward.extend(forward);
            let note = match stop {
                Stop::LeftBox => "level set leaves the box",
                _ => "step limit reached before the contour closed",
            };
            Ok(open(backward, Some(seed), step, note))
        }
    }
}
