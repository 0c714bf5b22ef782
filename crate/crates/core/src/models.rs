//! Process models: expected behaviour `μ(Θ, t)` and its parameter Jacobian.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odeint::rk5_fixed_states;

/// Largest step (days) of the fixed-grid SIR solve.
pub const SIR_MAX_STEP: f64 = 0.01;
/// Relative central-difference step for the SIR Jacobian.
pub const SIR_FD_REL_STEP: f64 = 1e-5;
pub const SIR_FD_ABS_STEP: f64 = 1e-8;

pub const SIGMA: &str = "sigma";

/// An ordered set of named parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    names: Vec<String>,
    values: Vec<f64>,
}

impl ParameterPoint {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>, values: Vec<f64>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} parameter names but {} values",
                names.len(),
                values.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::invalid(format!("duplicate parameter name `{n}`")));
            }
        }
        Ok(Self { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Same names, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.names.clone(), values)
    }
}

impl fmt::Display for ParameterPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (n, v)) in self.names.iter().zip(&self.values).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}={v}")?;
        }
        write!(f, ")")
    }
}

/// Closed interval `[lo, hi]` of admissible values for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

const SIGMA_BOUND: Bound = Bound { lo: 1e-6, hi: f64::INFINITY };
const RATE_BOUND: Bound = Bound { lo: 1e-6, hi: 1e3 };
const DENSITY_BOUND: Bound = Bound { lo: 1e-6, hi: 1e4 };
const LOCATION_BOUND: Bound = Bound {
    lo: f64::NEG_INFINITY,
    hi: f64::INFINITY,
};

/// Axis-aligned box over the inferred parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid("box bounds must be nonempty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::invalid(format!("box {lo:?}..{hi:?} must have finite lo < hi")));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| v >= l && v <= h)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn diagonal(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    UnivariateNormal,
    #[serde(rename = "multivariate-normal-2d")]
    MultivariateNormal2d,
    Linear,
    Exponential,
    Logistic,
    Sir,
}

impl Family {
    /// Full parameter set Θ in canonical order.
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            Family::UnivariateNormal => &["mu", SIGMA],
            Family::MultivariateNormal2d => &["mu1", "mu2", SIGMA],
            Family::Linear | Family::Exponential => &["a", "C0", SIGMA],
            Family::Logistic => &["r", "C0", "K", SIGMA],
            Family::Sir => &["beta", "gamma", SIGMA],
        }
    }

    /// Observable outputs; a spec observes all of them, in this order, except
    /// for SIR where any nonempty ordered subset is allowed.
    pub fn all_species(self) -> &'static [&'static str] {
        match self {
            Family::UnivariateNormal => &["x"],
            Family::MultivariateNormal2d => &["x1", "x2"],
            Family::Linear | Family::Exponential | Family::Logistic => &["C"],
            Family::Sir => &["S", "I", "R"],
        }
    }

    pub fn bound(self, param: &str) -> Bound {
        match param {
            SIGMA => SIGMA_BOUND,
            "a" | "r" | "beta" | "gamma" => RATE_BOUND,
            "C0" | "K" => DENSITY_BOUND,
            _ => LOCATION_BOUND,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::UnivariateNormal => "univariate-normal",
            Family::MultivariateNormal2d => "multivariate-normal-2d",
            Family::Linear => "linear",
            Family::Exponential => "exponential",
            Family::Logistic => "logistic",
            Family::Sir => "sir",
        }
    }

    fn has_closed_form(self) -> bool {
        self != Family::Sir
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A model family with its known parameters and the names of the parameters
/// to infer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    family: Family,
    fixed: BTreeMap<String, f64>,
    inferred: Vec<String>,
    species: Vec<String>,
    initial_conditions: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn new(
        family: Family,
        fixed: BTreeMap<String, f64>,
        inferred: Vec<String>,
        species: Vec<String>,
        initial_conditions: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let spec = Self {
            family,
            fixed,
            inferred,
            species,
            initial_conditions,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Convenience constructor from slices.
    pub fn build(family: Family, fixed: &[(&str, f64)], inferred: &[&str], species: &[&str]) -> Result<Self> {
        Self::new(
            family,
            fixed.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            inferred.iter().map(|s| s.to_string()).collect(),
            species.iter().map(|s| s.to_string()).collect(),
            BTreeMap::new(),
        )
    }

    /// SIR spec with initial fractions for `S`, `I` and `R`.
    pub fn sir(fixed: &[(&str, f64)], inferred: &[&str], species: &[&str], ic: &[(&str, f64)]) -> Result<Self> {
        Self::new(
            Family::Sir,
            fixed.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            inferred.iter().map(|s| s.to_string()).collect(),
            species.iter().map(|s| s.to_string()).collect(),
            ic.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        )
    }

    pub fn with_initial_conditions(mut self, ic: &[(&str, f64)]) -> Result<Self> {
        self.initial_conditions = ic.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let all = self.family.parameters();
        for name in &self.inferred {
            if !all.contains(&name.as_str()) {
                return Err(Error::invalid(format!(
                    "`{name}` is not a parameter of the {} family",
                    self.family
                )));
            }
            if self.fixed.contains_key(name) {
                return Err(Error::invalid(format!("`{name}` is both fixed and inferred")));
            }
        }
        for (i, n) in self.inferred.iter().enumerate() {
            if self.inferred[..i].contains(n) {
                return Err(Error::invalid(format!("`{n}` inferred twice")));
            }
        }
        for name in self.fixed.keys() {
            if !all.contains(&name.as_str()) {
                return Err(Error::invalid(format!(
                    "`{name}` is not a parameter of the {} family",
                    self.family
                )));
            }
        }
        for p in all {
            if !self.fixed.contains_key(*p) && !self.inferred.iter().any(|n| n == p) {
                return Err(Error::invalid(format!("parameter `{p}` is neither fixed nor inferred")));
            }
        }
        if self.inferred.len() != 2 {
            return Err(Error::invalid(format!(
                "exactly two parameters must be inferred, got {}",
                self.inferred.len()
            )));
        }
        for (name, &value) in &self.fixed {
            check_bound(self.family, name, value)?;
        }

        let allowed = self.family.all_species();
        if self.species.is_empty() {
            return Err(Error::invalid("at least one species must be observed"));
        }
        if self.family == Family::Sir {
            let mut last = None;
            for s in &self.species {
                let pos = allowed
                    .iter()
                    .position(|a| a == s)
                    .ok_or_else(|| Error::invalid(format!("unknown SIR species `{s}`")))?;
                if last.is_some_and(|l| pos <= l) {
                    return Err(Error::invalid("SIR species must be distinct and ordered S, I, R"));
                }
                last = Some(pos);
            }
            for key in ["S", "I", "R"] {
                match self.initial_conditions.get(key) {
                    Some(v) if *v >= 0.0 && v.is_finite() => {}
                    Some(v) => {
                        return Err(Error::invalid(format!("initial condition {key} = {v} must be ≥ 0")));
                    }
                    None => return Err(Error::invalid(format!("missing SIR initial condition `{key}`"))),
                }
            }
        } else if self.species.iter().map(String::as_str).ne(allowed.iter().copied()) {
            return Err(Error::invalid(format!(
                "the {} family observes species {:?}",
                self.family, allowed
            )));
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn fixed(&self) -> &BTreeMap<String, f64> {
        &self.fixed
    }

    pub fn inferred(&self) -> &[String] {
        &self.inferred
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn initial_conditions(&self) -> &BTreeMap<String, f64> {
        &self.initial_conditions
    }

    pub fn n_params(&self) -> usize {
        self.inferred.len()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn sigma_inferred(&self) -> bool {
        self.inferred.iter().any(|n| n == SIGMA)
    }

    /// Index of σ among the inferred parameters.
    pub fn sigma_index(&self) -> Option<usize> {
        self.inferred.iter().position(|n| n == SIGMA)
    }

    pub fn point(&self, values: Vec<f64>) -> Result<ParameterPoint> {
        ParameterPoint::new(self.inferred.clone(), values)
    }

    pub fn bounds(&self) -> Vec<Bound> {
        self.inferred.iter().map(|n| self.family.bound(n)).collect()
    }

    /// Checks `theta` against the inferred names and their bounds.
    pub fn check(&self, theta: &ParameterPoint) -> Result<()> {
        if theta.names() != self.inferred.as_slice() {
            return Err(Error::invalid(format!(
                "parameter names {:?} do not match inferred {:?}",
                theta.names(),
                self.inferred
            )));
        }
        self.check_values(theta.values())
    }

    pub fn check_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.inferred.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter values, got {}",
                self.inferred.len(),
                values.len()
            )));
        }
        for (name, &v) in self.inferred.iter().zip(values) {
            check_bound(self.family, name, v)?;
        }
        Ok(())
    }

    /// Full parameter vector Θ (canonical family order) with the inferred
    /// values substituted, bounds checked.
    pub fn full_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_values(values)?;
        Ok(self.merge(values))
    }

    fn merge(&self, values: &[f64]) -> Vec<f64> {
        self.family
            .parameters()
            .iter()
            .map(|p| match self.inferred.iter().position(|n| n == p) {
                Some(i) => values[i],
                None => self.fixed[*p],
            })
            .collect()
    }

    /// σ at the given inferred values.
    pub fn sigma(&self, values: &[f64]) -> f64 {
        match self.sigma_index() {
            Some(i) => values[i],
            None => self.fixed[SIGMA],
        }
    }

    fn species_indices(&self) -> Vec<usize> {
        let all = self.family.all_species();
        self.species
            .iter()
            .map(|s| all.iter().position(|a| a == s).expect("validated species"))
            .collect()
    }
}

fn check_bound(family: Family, name: &str, value: f64) -> Result<()> {
    let bound = family.bound(name);
    if !value.is_finite() || !bound.contains(value) {
        return Err(Error::Domain {
            name: name.to_string(),
            value,
            bound: bound.to_string(),
        });
    }
    Ok(())
}

/// Expected values of the observed species at the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub times: Vec<f64>,
    /// `means[j][m]`: species `m` at `times[j]`.
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
}

/// `(dS/dt, dI/dt, dR/dt)` of the SIR model with proportions `(S, I, R)`.
pub fn sir_rhs(state: [f64; 3], beta: f64, gamma: f64) -> [f64; 3] {
    let [s, i, _] = state;
    let infection = beta * s * i;
    let recovery = gamma * i;
    [-infection, infection - recovery, recovery]
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("times must be nonempty"));
    }
    if times.iter().any(|t| !t.is_finite()) || times[0] < 0.0 {
        return Err(Error::invalid("times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    Ok(())
}

/// Full SIR state `[S, I, R]` at each time, no bound checks. Used both for
/// the forward map and for finite-difference probes that may sit just
/// outside the parameter domain.
fn sir_states(beta: f64, gamma: f64, y0: [f64; 3], times: &[f64]) -> Result<Vec<[f64; 3]>> {
    let rhs = |_t: f64, y: &[f64; 3]| sir_rhs(*y, beta, gamma);
    Ok(rk5_fixed_states(rhs, y0, 0.0, times, SIR_MAX_STEP)?)
}

fn sir_initial_state(spec: &ModelSpec) -> [f64; 3] {
    let ic = &spec.initial_conditions;
    [ic["S"], ic["I"], ic["R"]]
}

/// Closed-form mean of one species and its partials w.r.t. the full Θ
/// (canonical order, σ partial included and always 0).
fn closed_form(family: Family, full: &[f64], species: usize, t: f64) -> (f64, Vec<f64>) {
    match family {
        Family::UnivariateNormal => (full[0], vec![1.0, 0.0]),
        Family::MultivariateNormal2d => {
            let mut d = vec![0.0; 3];
            d[species] = 1.0;
            (full[species], d)
        }
        Family::Linear => {
            let (a, c0) = (full[0], full[1]);
            (a * t + c0, vec![t, 1.0, 0.0])
        }
        Family::Exponential => {
            let (a, c0) = (full[0], full[1]);
            let e = (a * t).exp();
            (c0 * e, vec![t * c0 * e, e, 0.0])
        }
        Family::Logistic => {
            let (r, c0, k) = (full[0], full[1], full[2]);
            let decay = (-r * t).exp();
            let denom = c0 + (k - c0) * decay;
            let mean = c0 * k / denom;
            let d2 = denom * denom;
            let dr = c0 * k * t * (k - c0) * decay / d2;
            let dc0 = k * k * decay / d2;
            let dk = c0 * c0 * (1.0 - decay) / d2;
            (mean, vec![dr, dc0, dk, 0.0])
        }
        Family::Sir => unreachable!("SIR has no closed form"),
    }
}

/// Expected value of each observed species at time `t`.
pub fn mean(spec: &ModelSpec, theta: &ParameterPoint, t: f64) -> Result<Vec<f64>> {
    spec.check(theta)?;
    Ok(solve_values(spec, theta.values(), &[t])?.means.remove(0))
}

/// Model means at exactly the requested times.
pub fn solve_forward(spec: &ModelSpec, theta: &ParameterPoint, times: &[f64]) -> Result<ModelOutput> {
    spec.check(theta)?;
    solve_values(spec, theta.values(), times)
}

/// [`solve_forward`] on raw inferred values.
pub fn solve_values(spec: &ModelSpec, values: &[f64], times: &[f64]) -> Result<ModelOutput> {
    check_times(times)?;
    let full = spec.full_values(values)?;
    let sigma = spec.sigma(values);
    let idx = spec.species_indices();
    let means = if spec.family.has_closed_form() {
        times
            .iter()
            .map(|&t| idx.iter().map(|&m| closed_form(spec.family, &full, m, t).0).collect())
            .collect()
    } else {
        sir_states(full[0], full[1], sir_initial_state(spec), times)?
            .into_iter()
            .map(|state| idx.iter().map(|&m| state[m]).collect())
            .collect()
    };
    Ok(ModelOutput {
        times: times.to_vec(),
        means,
        sigma,
    })
}

/// Jacobian of the stacked outputs w.r.t. the inferred parameters.
///
/// Rows are the means ordered time-major then species. When σ is inferred a
/// single final row holds `∂σ/∂θ_i` (1 in the σ column, 0 elsewhere).
pub fn model_jacobian(spec: &ModelSpec, theta: &ParameterPoint, times: &[f64]) -> Result<DMatrix<f64>> {
    spec.check(theta)?;
    jacobian_values(spec, theta.values(), times)
}

pub fn jacobian_values(spec: &ModelSpec, values: &[f64], times: &[f64]) -> Result<DMatrix<f64>> {
    check_times(times)?;
    let full = spec.full_values(values)?;
    let nu = spec.n_params();
    let m_count = spec.n_species();
    let n_rows = times.len() * m_count + usize::from(spec.sigma_inferred());
    let mut jac = DMatrix::zeros(n_rows, nu);
    let params = spec.family.parameters();
    let cols: Vec<usize> = spec
        .inferred
        .iter()
        .map(|n| params.iter().position(|p| p == n).unwrap())
        .collect();
    let idx = spec.species_indices();

    if spec.family.has_closed_form() {
        for (j, &t) in times.iter().enumerate() {
            for (m, &sp) in idx.iter().enumerate() {
                let (_, partials) = closed_form(spec.family, &full, sp, t);
                for (c, &p) in cols.iter().enumerate() {
                    jac[(j * m_count + m, c)] = partials[p];
                }
            }
        }
    } else {
        let y0 = sir_initial_state(spec);
        for (c, &p) in cols.iter().enumerate() {
            if params[p] == SIGMA {
                continue;
            }
            let h = (SIR_FD_REL_STEP * full[p].abs()).max(SIR_FD_ABS_STEP);
            let mut plus = full.clone();
            let mut minus = full.clone();
            plus[p] += h;
            minus[p] -= h;
            let up = sir_states(plus[0], plus[1], y0, times)?;
            let down = sir_states(minus[0], minus[1], y0, times)?;
            for j in 0..times.len() {
                for (m, &sp) in idx.iter().enumerate() {
                    jac[(j * m_count + m, c)] = (up[j][sp] - down[j][sp]) / (2.0 * h);
                }
            }
        }
    }
    if let Some(s) = spec.sigma_index() {
        jac[(n_rows - 1, s)] = 1.0;
    }
    Ok(jac)
}
