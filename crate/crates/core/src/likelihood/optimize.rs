//! Maximum-likelihood estimation with a box-constrained Nelder–Mead search.

use serde::{Deserialize, Serialize};

use super::{log_likelihood_values, Dataset};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, ParamBox, ParameterPoint};
use crate::synth::rng::{keyed_bits, keyed_uniform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta_hat: ParameterPoint,
    pub loglik_at_mle: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MleOptions {
    /// Stop when every simplex vertex is within this relative distance of
    /// the best vertex, per coordinate.
    pub xtol_rel: f64,
    /// Evaluation budget per local search.
    pub max_evals: usize,
    /// Extra Nelder–Mead restarts from the incumbent.
    pub restarts: usize,
    /// Additional Latin-hypercube starting points (0 disables multi-start).
    pub multistart: usize,
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            xtol_rel: 1e-8,
            max_evals: 10_000,
            restarts: 3,
            multistart: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadReport {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` over `bounds` starting from `x0`. Trial points are projected
/// onto the box; non-finite objective values count as `+∞`. The best value
/// found never increases.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], bounds: &ParamBox, xtol_rel: f64, max_evals: usize) -> NelderMeadReport
where
    F: FnMut(&[f64]) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = x0.len();
    let widths = bounds.widths();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let project = |x: &mut Vec<f64>| bounds.clamp(x);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    project(&mut start);
    simplex.push(start.clone());
    for k in 0..n {
        let step = (0.05 * start[k].abs().max(0.01 * widths[k])).min(0.25 * widths[k]);
        let mut v = start.clone();
        v[k] += step;
        if v[k] > bounds.hi[k] {
            v[k] = start[k] - step;
        }
        project(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let mut iterations = 0usize;
    let mut converged = false;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = &simplex[0];
        let spread_ok = simplex[1..].iter().all(|v| {
            v.iter()
                .zip(best)
                .zip(&widths)
                .all(|((a, b), w)| (a - b).abs() <= xtol_rel * (b.abs() + 1e-3 * w))
        });
        if spread_ok && values[0].is_finite() {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect();
            project(&mut p);
            p
        };

        let xr = along(REFLECT);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(REFLECT * EXPAND);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(REFLECT * CONTRACT);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-CONTRACT);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(values[n]) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let mut p: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + SHRINK * (x - b))
                .collect();
            project(&mut p);
            values[i] = eval(&p, &mut evals);
            simplex[i] = p;
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NelderMeadReport {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        evaluations: evals,
        converged,
    }
}

/// Box intersected with the family's parameter bounds.
fn effective_box(spec: &ModelSpec, bounds: &ParamBox) -> Result<ParamBox> {
    if bounds.dim() != spec.n_params() {
        return Err(Error::invalid(format!(
            "box has {} dimensions, model infers {}",
            bounds.dim(),
            spec.n_params()
        )));
    }
    let family = spec.bounds();
    let lo = bounds.lo.iter().zip(&family).map(|(l, b)| l.max(b.lo)).collect();
    let hi = bounds.hi.iter().zip(&family).map(|(h, b)| h.min(b.hi)).collect();
    ParamBox::new(lo, hi)
}

fn latin_hypercube(bounds: &ParamBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let mut points = vec![vec![0.0; d]; n];
    for k in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.sort_by_key(|&i| keyed_bits(seed, &[k as u64, i as u64, 0]));
        for (i, p) in points.iter_mut().enumerate() {
            let u = keyed_uniform(seed, &[k as u64, i as u64, 1]);
            p[k] = bounds.lo[k] + (strata[i] as f64 + u) / n as f64 * (bounds.hi[k] - bounds.lo[k]);
        }
    }
    points
}

/// Maximum-likelihood estimate with default options.
pub fn mle(spec: &ModelSpec, data: &Dataset, start: &ParameterPoint, bounds: &ParamBox) -> Result<MleResult> {
    mle_with(spec, data, start, bounds, &MleOptions::default())
}

pub fn mle_with(
    spec: &ModelSpec,
    data: &Dataset,
    start: &ParameterPoint,
    bounds: &ParamBox,
    opts: &MleOptions,
) -> Result<MleResult> {
    spec.check(start)?;
    let bx = effective_box(spec, bounds)?;
    let x0 = start.values();
    if x0
        .iter()
        .zip(bx.lo.iter().zip(&bx.hi))
        .any(|(v, (l, h))| !(v > l && v < h))
    {
        return Err(Error::invalid(format!(
            "start {start} must lie strictly inside the search box {:?}..{:?}",
            bx.lo, bx.hi
        )));
    }
    let objective = |x: &[f64]| -> f64 {
        match log_likelihood_values(spec, x, data) {
            Ok(ll) => -ll,
            Err(_) => f64::INFINITY,
        }
    };

    let mut starts = vec![x0.to_vec()];
    if opts.multistart > 0 {
        starts.extend(latin_hypercube(&bx, opts.multistart, opts.seed));
    }

    let mut best: Option<NelderMeadReport> = None;
    let mut total_iters = 0usize;
    let mut total_evals = 0usize;
    for s in &starts {
        let mut run = nelder_mead(objective, s, &bx, opts.xtol_rel, opts.max_evals);
        total_iters += run.iterations;
        total_evals += run.evaluations;
        for _ in 0..opts.restarts {
            if !run.fx.is_finite() {
                break;
            }
            let again = nelder_mead(objective, &run.x, &bx, opts.xtol_rel, opts.max_evals);
            total_iters += again.iterations;
            total_evals += again.evaluations;
            let improved = again.fx < run.fx - 1e-12 * run.fx.abs().max(1.0);
            if again.fx <= run.fx {
                run = NelderMeadReport {
                    converged: again.converged,
                    ..again
                };
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().map_or(true, |b| run.fx < b.fx) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    if !best.fx.is_finite() {
        return Err(Error::Optimization(
            "log-likelihood was non-finite at every evaluated point".into(),
        ));
    }

    let mut warnings = Vec::new();
    if let Some(s) = spec.sigma_index() {
        if best.x[s] <= bx.lo[s] * (1.0 + 1e-6) {
            warnings.push(format!(
                "sigma estimate clamped to its lower bound {:e}; the data may be degenerate",
                bx.lo[s]
            ));
        }
    }
    if !best.converged {
        warnings.push(format!("evaluation budget of {} exhausted", opts.max_evals));
    }
    Ok(MleResult {
        theta_hat: start.with_values(best.x)?,
        loglik_at_mle: -best.fx,
        iterations: total_iters,
        evaluations: total_evals,
        converged: best.converged,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;

    #[test]
    fn nelder_mead_rosenbrock() {
        let bx = ParamBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let mut r = nelder_mead(rosen, &[-1.2, 1.0], &bx, 1e-10, 10_000);
        r = nelder_mead(rosen, &r.x.clone(), &bx, 1e-10, 10_000);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_respects_box() {
        let bx = ParamBox::new(vec![1.0, 1.0], vec![3.0, 3.0]).unwrap();
        let r = nelder_mead(|x| x[0] * x[0] + x[1] * x[1], &[2.0, 2.5], &bx, 1e-10, 10_000);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8, "{:?}", r.x);
    }

    #[test]
    fn start_outside_box_rejected() {
        let spec = ModelSpec::build(Family::UnivariateNormal, &[], &["mu", "sigma"], &["x"]).unwrap();
        let data = Dataset::new(vec![0.0], vec!["x".into()], vec![vec![vec![1.0], vec![2.0]]]).unwrap();
        let bx = ParamBox::new(vec![0.0, 0.1], vec![1.0, 2.0]).unwrap();
        let start = spec.point(vec![1.0, 1.0]).unwrap();
        assert!(mle(&spec, &data, &start, &bx).is_err());
    }

    #[test]
    fn degenerate_data_clamps_sigma() {
        let spec = ModelSpec::build(Family::UnivariateNormal, &[], &["mu", "sigma"], &["x"]).unwrap();
        let data = Dataset::new(vec![0.0], vec!["x".into()], vec![vec![vec![0.5]; 5]]).unwrap();
        let bx = ParamBox::new(vec![-1.0, 0.0], vec![2.0, 2.0]).unwrap();
        let start = spec.point(vec![0.3, 0.5]).unwrap();
        let r = mle(&spec, &data, &start, &bx).unwrap();
        let sigma = r.theta_hat.values()[1];
        assert!(sigma <= 1e-6 * (1.0 + 1e-6), "{sigma}");
        assert!((r.theta_hat.values()[0] - 0.5).abs() < 1e-6);
        assert!(r.warnings.iter().any(|w| w.contains("lower bound")));
    }

    #[test]
    fn latin_hypercube_stratifies() {
        let bx = ParamBox::new(vec![0.0, 10.0], vec![1.0, 20.0]).unwrap();
        let pts = latin_hypercube(&bx, 5, 42);
        for k in 0..2 {
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| ((p[k] - bx.lo[k]) / (bx.hi[k] - bx.lo[k]) * 5.0).floor() as usize)
                .collect();
            strata.sort();
            assert_eq!(strata, vec![0, 1, 2, 3, 4]);
        }
    }
}
