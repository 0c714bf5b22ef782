//! χ² quantiles and Wilks confidence thresholds.

use crate::error::{Error, Result};

const ROOT_TOL: f64 = 1e-10;

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefactor = a * x.ln() - x - libm::lgamma(a);
    if x < a + 1.0 {
        // series
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..10_000 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() + log_prefactor).exp().min(1.0)
    } else {
        // continued fraction for Q(a, x), modified Lentz
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - (log_prefactor.exp() * h)
    }
}

/// CDF of the χ² distribution with `nu` degrees of freedom.
pub fn chi2_cdf(nu: u32, x: f64) -> f64 {
    gamma_p(nu as f64 / 2.0, x / 2.0)
}

/// The `alpha`-quantile Δ of χ²(`nu`), by bracketing and bisection on the CDF.
pub fn chi2_quantile(nu: u32, alpha: f64) -> Result<f64> {
    if nu == 0 {
        return Err(Error::invalid("degrees of freedom must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("level {alpha} must lie in (0, 1)")));
    }
    let mut hi = nu as f64;
    while chi2_cdf(nu, hi) < alpha {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > ROOT_TOL * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi2_cdf(nu, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Wilks threshold `−Δ_{ν,α}/2` on the normalised log-likelihood.
pub fn confidence_threshold(nu: u32, alpha: f64) -> Result<f64> {
    Ok(-0.5 * chi2_quantile(nu, alpha)?)
}
