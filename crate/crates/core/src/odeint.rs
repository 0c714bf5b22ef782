//! Explicit initial-value integrators.
//!
//! Three drivers share the [`IvpProblem`] / [`Trajectory`] types:
//!
//! * [`integrate_heun`]: fixed-step second-order Heun (explicit trapezoid).
//! * [`integrate_rk54`]: adaptive Dormand–Prince 5(4) with PI step control and
//!   optional terminal events located by bisection.
//! * [`integrate_rk5_fixed`]: the fifth-order Dormand–Prince solution on a step
//!   grid that depends only on the time span and the requested stop times. The
//!   numerical solution is then a smooth function of any parameters inside the
//!   right-hand side, which is what nested finite differences need.

use thiserror::Error;

/// Result of a right-hand-side evaluation. An `Err` carries a short reason,
/// e.g. "parameter left its domain".
pub type RhsResult = std::result::Result<(), String>;

type RhsFn<'a> = dyn Fn(f64, &[f64], &mut [f64]) -> RhsResult + 'a;
type EventFn<'a> = dyn Fn(f64, &[f64]) -> f64 + 'a;

/// Tolerance on `|event|` at a located event.
pub const EVENT_TOL: f64 = 1e-10;

pub struct IvpProblem<'a> {
    rhs: Box<RhsFn<'a>>,
    y0: Vec<f64>,
    t_start: f64,
    t_end: f64,
    event: Option<Box<EventFn<'a>>>,
}

impl<'a> IvpProblem<'a> {
    pub fn new<F>(rhs: F, y0: Vec<f64>, tspan: (f64, f64)) -> Result<Self, OdeError>
    where
        F: Fn(f64, &[f64], &mut [f64]) -> RhsResult + 'a,
    {
        let (t_start, t_end) = tspan;
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(OdeError::InvalidProblem(format!(
                "time span ({t_start}, {t_end}) must be finite with t_end > t_start"
            )));
        }
        if y0.is_empty() || y0.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::InvalidProblem(
                "initial state must be nonempty and finite".into(),
            ));
        }
        Ok(Self {
            rhs: Box::new(rhs),
            y0,
            t_start,
            t_end,
            event: None,
        })
    }

    /// Stop integration at the first sign change of `event(t, y)`.
    pub fn with_event<G>(mut self, event: G) -> Self
    where
        G: Fn(f64, &[f64]) -> f64 + 'a,
    {
        self.event = Some(Box::new(event));
        self
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn tspan(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }

    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) -> RhsResult {
        (self.rhs)(t, y, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(format!("non-finite derivative at t = {t}"));
        }
        Ok(())
    }

    fn event_at(&self, t: f64, y: &[f64]) -> Option<f64> {
        self.event.as_ref().map(|g| g(t, y))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Largest scaled error estimate over accepted steps (adaptive driver
    /// only). A step is accepted when this is at most 1.
    pub max_accepted_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    /// Derivative of the state at each sample, used for Hermite dense output.
    pub dys: Vec<Vec<f64>>,
    pub terminated_by_event: bool,
    pub event_time: Option<f64>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    fn start(t: f64, y: Vec<f64>, dy: Vec<f64>) -> Self {
        Self {
            ts: vec![t],
            ys: vec![y],
            dys: vec![dy],
            terminated_by_event: false,
            event_time: None,
            stats: IntegrationStats::default(),
        }
    }

    fn push(&mut self, t: f64, y: Vec<f64>, dy: Vec<f64>) {
        self.ts.push(t);
        self.ys.push(y);
        self.dys.push(dy);
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.ts.last().expect("trajectory has at least one sample")
    }

    pub fn final_state(&self) -> &[f64] {
        self.ys.last().expect("trajectory has at least one sample")
    }

    /// Cubic Hermite interpolation between the bracketing samples. Returns
    /// `None` outside `[ts[0], ts[last]]`.
    pub fn sample(&self, t: f64) -> Option<Vec<f64>> {
        let first = self.ts[0];
        let last = self.final_time();
        if !(first..=last).contains(&t) {
            return None;
        }
        let idx = match self.ts.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => return Some(self.ys[i].clone()),
            Err(i) => i,
        };
        let (t0, t1) = (self.ts[idx - 1], self.ts[idx]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let (y0, y1) = (&self.ys[idx - 1], &self.ys[idx]);
        let (d0, d1) = (&self.dys[idx - 1], &self.dys[idx]);
        Some(
            (0..y0.len())
                .map(|k| h00 * y0[k] + h10 * h * d0[k] + h01 * y1[k] + h11 * h * d1[k])
                .collect(),
        )
    }
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite {
        step: usize,
        t: f64,
        partial: Box<Trajectory>,
    },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow {
        t: f64,
        h: f64,
        partial: Box<Trajectory>,
    },

    #[error("right-hand side failed at t = {t}: {reason}")]
    Rhs {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("step limit of {limit} reached at t = {t}")]
    StepLimit {
        limit: usize,
        t: f64,
        partial: Box<Trajectory>,
    },
}

impl OdeError {
    /// The samples computed before the failure, when any were.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            OdeError::InvalidProblem(_) => None,
            OdeError::NonFinite { partial, .. }
            | OdeError::StepUnderflow { partial, .. }
            | OdeError::Rhs { partial, .. }
            | OdeError::StepLimit { partial, .. } => Some(partial),
        }
    }

    pub fn into_partial(self) -> Option<Trajectory> {
        match self {
            OdeError::InvalidProblem(_) => None,
            OdeError::NonFinite { partial, .. }
            | OdeError::StepUnderflow { partial, .. }
            | OdeError::Rhs { partial, .. }
            | OdeError::StepLimit { partial, .. } => Some(*partial),
        }
    }
}

fn initial_derivative(problem: &IvpProblem<'_>) -> Result<Vec<f64>, OdeError> {
    let mut f0 = vec![0.0; problem.dim()];
    problem
        .eval(problem.t_start, &problem.y0, &mut f0)
        .map_err(|reason| OdeError::Rhs {
            t: problem.t_start,
            reason,
            partial: Box::new(Trajectory::start(
                problem.t_start,
                problem.y0.clone(),
                vec![f64::NAN; problem.dim()],
            )),
        })?;
    Ok(f0)
}

// ---------------------------------------------------------------------------
// Heun
// ---------------------------------------------------------------------------

/// One Heun step: `y + h/2 (k1 + k2)` with `k1 = f(t, y)`,
/// `k2 = f(t + h, y + h k1)`. `k1` is supplied by the caller.
pub fn heun_step<F>(rhs: F, t: f64, y: &[f64], k1: &[f64], h: f64) -> Result<Vec<f64>, String>
where
    F: Fn(f64, &[f64], &mut [f64]) -> RhsResult,
{
    let predictor: Vec<f64> = y.iter().zip(k1).map(|(yi, ki)| yi + h * ki).collect();
    let mut k2 = vec![0.0; y.len()];
    rhs(t + h, &predictor, &mut k2)?;
    Ok(y
        .iter()
        .zip(k1.iter().zip(&k2))
        .map(|(yi, (a, b))| yi + 0.5 * h * (a + b))
        .collect())
}

/// Fixed-step Heun integration over the problem's span. The last step is
/// shortened to land exactly on `t_end`. An event, if present, stops the
/// integration at the first sign change, located by bisection on the
/// length of the final Heun step.
pub fn integrate_heun(problem: &IvpProblem<'_>, h: f64) -> Result<Trajectory, OdeError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OdeError::InvalidProblem(format!("step size {h} must be positive")));
    }
    let rhs = |t: f64, y: &[f64], out: &mut [f64]| problem.eval(t, y, out);
    let (t_start, t_end) = problem.tspan();
    let f0 = initial_derivative(problem)?;
    let mut traj = Trajectory::start(t_start, problem.y0.clone(), f0);
    traj.stats.rhs_evals = 1;

    let n_full = ((t_end - t_start) / h).floor() as usize;
    let mut step = 0usize;
    loop {
        let t = traj.final_time();
        if t >= t_end {
            break;
        }
        step += 1;
        let t_next = if step <= n_full {
            t_start + step as f64 * h
        } else {
            t_end
        };
        let t_next = if t_end - t_next < 1e-12 * h { t_end } else { t_next };
        let dt = t_next - t;
        if dt <= 0.0 {
            break;
        }
        let y = traj.final_state().to_vec();
        let k1 = traj.dys.last().unwrap().clone();
        let y_new = heun_step(rhs, t, &y, &k1, dt).map_err(|reason| OdeError::Rhs {
            t,
            reason,
            partial: Box::new(traj.clone()),
        })?;
        traj.stats.rhs_evals += 1;
        if y_new.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite {
                step,
                t: t_next,
                partial: Box::new(traj),
            });
        }

        if let (Some(g_old), Some(g_new)) = (problem.event_at(t, &y), problem.event_at(t_next, &y_new)) {
            if crossed(g_old, g_new) {
                let g = |tau: f64| -> Result<(f64, Vec<f64>), String> {
                    let yt = heun_step(rhs, t, &y, &k1, tau)?;
                    Ok((problem.event_at(t + tau, &yt).unwrap(), yt))
                };
                let (tau, y_ev) = locate_event(g, g_old, (g_new, y_new.clone()), dt).map_err(|reason| OdeError::Rhs {
                    t,
                    reason,
                    partial: Box::new(traj.clone()),
                })?;
                let mut d = vec![0.0; y.len()];
                let _ = problem.eval(t + tau, &y_ev, &mut d);
                traj.push(t + tau, y_ev, d);
                traj.stats.accepted += 1;
                traj.terminated_by_event = true;
                traj.event_time = Some(t + tau);
                return Ok(traj);
            }
        }

        let mut d = vec![0.0; y.len()];
        problem.eval(t_next, &y_new, &mut d).map_err(|reason| OdeError::Rhs {
            t: t_next,
            reason,
            partial: Box::new(traj.clone()),
        })?;
        traj.stats.rhs_evals += 1;
        traj.stats.accepted += 1;
        traj.push(t_next, y_new, d);
    }
    Ok(traj)
}

fn crossed(g_old: f64, g_new: f64) -> bool {
    g_old != 0.0 && (g_new == 0.0 || g_old.signum() != g_new.signum())
}

/// Locates an event inside a step by a bracketing root search on the step
/// length `tau ∈ (0, h]`; `g(tau)` takes a fresh step of length `tau` from
/// the left end and returns the event value there. Uses the Illinois variant
/// of regula falsi, which keeps a sign-changing bracket at every iteration
/// and falls back to a bisection step whenever an interpolated point would
/// not shrink the bracket enough.
fn locate_event<G>(g: G, g_left: f64, right: (f64, Vec<f64>), h: f64) -> Result<(f64, Vec<f64>), String>
where
    G: Fn(f64) -> Result<(f64, Vec<f64>), String>,
{
    let (mut lo, mut hi) = (0.0, h);
    let (mut g_lo, mut g_hi) = (g_left, right.0);
    let mut best = (h, right.1);
    let mut best_g = right.0;
    if best_g.abs() <= EVENT_TOL {
        return Ok(best);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let width = hi - lo;
        let mut tau = lo - g_lo * width / (g_hi - g_lo);
        if !(tau > lo + 0.01 * width && tau < hi - 0.01 * width) {
            tau = 0.5 * (lo + hi);
        }
        let (gm, ym) = g(tau)?;
        if gm.abs() < best_g.abs() {
            best = (tau, ym);
            best_g = gm;
        }
        if best_g.abs() <= EVENT_TOL || width <= f64::EPSILON * h {
            break;
        }
        if gm.signum() == g_lo.signum() {
            lo = tau;
            g_lo = gm;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = tau;
            g_hi = gm;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Dormand–Prince 5(4)
// ---------------------------------------------------------------------------

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// b5 - b4
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct DpStep {
    y: Vec<f64>,
    err: Vec<f64>,
    /// f(t + h, y), reused as the first stage of the next step.
    dy: Vec<f64>,
}

fn dp_step(problem: &IvpProblem<'_>, t: f64, y: &[f64], k1: &[f64], h: f64) -> Result<DpStep, String> {
    let n = y.len();
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for i in 0..n {
        tmp[i] = y[i] + h * (A21 * k1[i]);
    }
    problem.eval(t + C2 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    problem.eval(t + C3 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    problem.eval(t + C4 * h, &tmp, &mut k4)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    problem.eval(t + C5 * h, &tmp, &mut k5)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    problem.eval(t + h, &tmp, &mut k6)?;
    let mut y5 = vec![0.0; n];
    for i in 0..n {
        y5[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    problem.eval(t + h, &y5, &mut k7)?;
    let err = (0..n)
        .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
        .collect();
    Ok(DpStep { y: y5, err, dy: k7 })
}

const RHS_EVALS_PER_STEP: usize = 6;
const MAX_STEPS: usize = 1_000_000;

fn scaled_error(err: &[f64], y_old: &[f64], y_new: &[f64], rtol: f64, atol: f64) -> f64 {
    err.iter()
        .zip(y_old.iter().zip(y_new))
        .map(|(e, (a, b))| e.abs() / (atol + rtol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

fn initial_step(problem: &IvpProblem<'_>, f0: &[f64], rtol: f64, atol: f64) -> f64 {
    let span = problem.t_end - problem.t_start;
    let y0 = &problem.y0;
    let sc: Vec<f64> = y0.iter().map(|v| atol + rtol * v.abs()).collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if problem.eval(problem.t_start + h0, &y1, &mut f1).is_err() {
        return h0 * 0.1;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Adaptive Dormand–Prince 5(4) integration.
///
/// A step is accepted when `max_i |e_i| / (atol + rtol·max(|y_i|, |y_i'|)) ≤ 1`.
/// The next step size follows a PI controller. If the right-hand side fails
/// inside a trial step the step is shrunk and retried; persistent failure
/// ends in [`OdeError::Rhs`] carrying the accepted part of the trajectory.
pub fn integrate_rk54(problem: &IvpProblem<'_>, rtol: f64, atol: f64) -> Result<Trajectory, OdeError> {
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(OdeError::InvalidProblem(format!(
            "tolerances must be positive (rtol = {rtol}, atol = {atol})"
        )));
    }
    const SAFETY: f64 = 0.9;
    const BETA: f64 = 0.04;
    const ALPHA: f64 = 0.2 - 0.75 * BETA;
    const MIN_FACTOR: f64 = 0.2;
    const MAX_FACTOR: f64 = 10.0;

    let (t_start, t_end) = problem.tspan();
    let span = t_end - t_start;
    let h_min = 1e-14 * span;
    let f0 = initial_derivative(problem)?;
    let mut h = initial_step(problem, &f0, rtol, atol);
    let mut traj = Trajectory::start(t_start, problem.y0.clone(), f0);
    traj.stats.rhs_evals = 2;
    let mut err_old: f64 = 1e-4;
    let mut last_rhs_failure: Option<String> = None;

    while traj.final_time() < t_end {
        if traj.stats.accepted + traj.stats.rejected >= MAX_STEPS {
            let t = traj.final_time();
            return Err(OdeError::StepLimit {
                limit: MAX_STEPS,
                t,
                partial: Box::new(traj),
            });
        }
        let t = traj.final_time();
        let remaining = t_end - t;
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h < h_min {
            return Err(match last_rhs_failure {
                Some(reason) => OdeError::Rhs {
                    t,
                    reason,
                    partial: Box::new(traj),
                },
                None => OdeError::StepUnderflow {
                    t,
                    h,
                    partial: Box::new(traj),
                },
            });
        }

        let y = traj.final_state().to_vec();
        let k1 = traj.dys.last().unwrap().clone();
        let step = match dp_step(problem, t, &y, &k1, h) {
            Ok(s) => s,
            Err(reason) => {
                last_rhs_failure = Some(reason);
                traj.stats.rejected += 1;
                h *= 0.25;
                continue;
            }
        };
        traj.stats.rhs_evals += RHS_EVALS_PER_STEP;

        let err = scaled_error(&step.err, &y, &step.y, rtol, atol);
        if !err.is_finite() {
            traj.stats.rejected += 1;
            h *= 0.25;
            continue;
        }
        let fac11 = err.powf(ALPHA);
        if err > 1.0 {
            traj.stats.rejected += 1;
            h /= (1.0 / MIN_FACTOR).min(fac11 / SAFETY);
            continue;
        }
        last_rhs_failure = None;
        traj.stats.accepted += 1;
        traj.stats.max_accepted_error = traj.stats.max_accepted_error.max(err);

        let t_new = if last { t_end } else { t + h };

        if let (Some(g_old), Some(g_new)) = (problem.event_at(t, &y), problem.event_at(t_new, &step.y)) {
            if crossed(g_old, g_new) {
                let g = |tau: f64| -> Result<(f64, Vec<f64>), String> {
                    let s = dp_step(problem, t, &y, &k1, tau)?;
                    Ok((problem.event_at(t + tau, &s.y).unwrap(), s.y))
                };
                let (tau, y_ev) = locate_event(g, g_old, (g_new, step.y.clone()), t_new - t).map_err(|reason| OdeError::Rhs {
                    t,
                    reason,
                    partial: Box::new(traj.clone()),
                })?;
                let mut d = vec![0.0; y.len()];
                let _ = problem.eval(t + tau, &y_ev, &mut d);
                traj.push(t + tau, y_ev, d);
                traj.terminated_by_event = true;
                traj.event_time = Some(t + tau);
                return Ok(traj);
            }
        }

        traj.push(t_new, step.y, step.dy);

        let fac = (fac11 / err_old.powf(BETA) / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
        h /= fac;
        err_old = err.max(1e-4);
    }
    Ok(traj)
}

/// Fifth-order Dormand–Prince on a deterministic step grid.
///
/// Every interval between consecutive checkpoints (`t_start`, each entry of
/// `stops`, `t_end`) is split into `ceil(len / max_step)` equal steps, and each
/// stop time is hit exactly. The grid depends only on the span and the stops.
pub fn integrate_rk5_fixed(problem: &IvpProblem<'_>, max_step: f64, stops: &[f64]) -> Result<Trajectory, OdeError> {
    if !(max_step > 0.0) {
        return Err(OdeError::InvalidProblem(format!("max step {max_step} must be positive")));
    }
    let (t_start, t_end) = problem.tspan();
    let mut checkpoints: Vec<f64> = stops.iter().copied().filter(|&s| s > t_start && s < t_end).collect();
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OdeError::InvalidProblem("stop times must be strictly increasing".into()));
    }
    checkpoints.push(t_end);

    let f0 = initial_derivative(problem)?;
    let mut traj = Trajectory::start(t_start, problem.y0.clone(), f0);
    traj.stats.rhs_evals = 1;
    let mut left = t_start;
    let mut step_index = 0usize;
    for &right in &checkpoints {
        let n = ((right - left) / max_step).ceil().max(1.0) as usize;
        let h = (right - left) / n as f64;
        for k in 1..=n {
            step_index += 1;
            let t = traj.final_time();
            let t_new = if k == n { right } else { left + k as f64 * h };
            let y = traj.final_state().to_vec();
            let k1 = traj.dys.last().unwrap().clone();
            let step = dp_step(problem, t, &y, &k1, t_new - t).map_err(|reason| OdeError::Rhs {
                t,
                reason,
                partial: Box::new(traj.clone()),
            })?;
            if step.y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite {
                    step: step_index,
                    t: t_new,
                    partial: Box::new(traj),
                });
            }
            traj.stats.rhs_evals += RHS_EVALS_PER_STEP;
            traj.stats.accepted += 1;
            traj.push(t_new, step.y, step.dy);
        }
        left = right;
    }
    Ok(traj)
}

/// [`integrate_rk5_fixed`] for small fixed-size autonomous-in-storage
/// systems, without allocating per step. Takes the same step grid and
/// returns only the states at `stops` (a stop at or before `t_start` gives
/// `y0`). Results agree bitwise with the general routine.
pub fn rk5_fixed_states<const N: usize, F>(
    f: F,
    y0: [f64; N],
    t_start: f64,
    stops: &[f64],
    max_step: f64,
) -> Result<Vec<[f64; N]>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    if !(max_step > 0.0) {
        return Err(OdeError::InvalidProblem(format!("max step {max_step} must be positive")));
    }
    if stops.windows(2).any(|w| w[1] <= w[0]) || stops.iter().any(|s| !s.is_finite()) {
        return Err(OdeError::InvalidProblem("stop times must be finite and strictly increasing".into()));
    }
    let lincomb = |y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]| -> [f64; N] {
        let mut out = [0.0; N];
        for i in 0..N {
            let mut acc = 0.0;
            for (c, k) in terms {
                acc += c * k[i];
            }
            out[i] = y[i] + h * acc;
        }
        out
    };
    let mut out = Vec::with_capacity(stops.len());
    let mut y = y0;
    let mut k1 = f(t_start, &y);
    let mut left = t_start;
    let mut step_index = 0usize;
    for &right in stops {
        if right <= t_start {
            out.push(y0);
            continue;
        }
        let n = ((right - left) / max_step).ceil().max(1.0) as usize;
        let h_nom = (right - left) / n as f64;
        let mut t = left;
        for k in 1..=n {
            step_index += 1;
            let t_new = if k == n { right } else { left + k as f64 * h_nom };
            let h = t_new - t;
            let k2 = f(t + C2 * h, &lincomb(&y, h, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &lincomb(&y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * h, &lincomb(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(t + C5 * h, &lincomb(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = f(t + h, &lincomb(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
            let y5 = lincomb(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            if y5.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite {
                    step: step_index,
                    t: t_new,
                    partial: Box::new(Trajectory::start(t, y.to_vec(), k1.to_vec())),
                });
            }
            k1 = f(t_new, &y5);
            y = y5;
            t = t_new;
        }
        left = right;
        out.push(y);
    }
    Ok(out)
}
