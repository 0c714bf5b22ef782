//! Scalar fields evaluated over rectangular two-parameter grids.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{scalar_curvature, MetricField};
use crate::likelihood::{normalized_log_likelihood_values, Dataset, MleResult};
use crate::models::{ModelSpec, ParamBox};

pub const DEFAULT_RESOLUTION: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::invalid(format!("grid resolution {resolution} must be at least 2")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("grid axis [{lo}, {hi}] is empty or unbounded")));
        }
        Ok(Self {
            name: name.into(),
            lo,
            hi,
            resolution,
        })
    }

    /// Coordinate of node `i`. Written as `lo + (i/(n−1))·(hi−lo)` so that
    /// nodes shared by grids of different resolution agree bitwise whenever
    /// the fractions are exactly representable.
    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.resolution {
            return self.hi;
        }
        self.lo + (i as f64 / (self.resolution - 1) as f64) * (self.hi - self.lo)
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.resolution).map(|i| self.coord(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub i1: usize,
    pub i2: usize,
    pub theta: [f64; 2],
    pub reason: String,
}

/// `values[i1][i2]` is the field at `(axis1.coord(i1), axis2.coord(i2))`;
/// cells listed in `failures` hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub axis1: Axis,
    pub axis2: Axis,
    pub values: Vec<Vec<f64>>,
    pub failures: Vec<CellFailure>,
}

impl ScalarGrid {
    /// Evaluates `f` at every node in parallel. Each cell is computed
    /// independently, so the result does not depend on scheduling.
    pub fn evaluate<F>(axis1: Axis, axis2: Axis, f: F) -> Self
    where
        F: Fn([f64; 2]) -> Result<f64> + Sync,
    {
        let (n1, n2) = (axis1.resolution, axis2.resolution);
        let cells: Vec<std::result::Result<f64, String>> = (0..n1 * n2)
            .into_par_iter()
            .map(|idx| {
                let theta = [axis1.coord(idx / n2), axis2.coord(idx % n2)];
                match f(theta) {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(v) => Err(format!("non-finite value {v}")),
                    Err(e) => Err(e.to_string()),
                }
            })
            .collect();
        let mut values = vec![vec![f64::NAN; n2]; n1];
        let mut failures = Vec::new();
        for (idx, cell) in cells.into_iter().enumerate() {
            let (i1, i2) = (idx / n2, idx % n2);
            match cell {
                Ok(v) => values[i1][i2] = v,
                Err(reason) => failures.push(CellFailure {
                    i1,
                    i2,
                    theta: [axis1.coord(i1), axis2.coord(i2)],
                    reason,
                }),
            }
        }
        Self {
            axis1,
            axis2,
            values,
            failures,
        }
    }

    pub fn value(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1][i2]
    }

    /// Largest finite value and its node.
    pub fn max(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i1, row) in self.values.iter().enumerate() {
            for (i2, &v) in row.iter().enumerate() {
                if v.is_finite() && best.map_or(true, |(_, _, b)| v > b) {
                    best = Some((i1, i2, v));
                }
            }
        }
        best
    }

    /// CSV with header `theta1,theta2,value`, `theta1` outermost; failed
    /// cells are written as `NaN`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["theta1", "theta2", "value"])?;
        for (i1, row) in self.values.iter().enumerate() {
            let t1 = self.axis1.coord(i1);
            for (i2, v) in row.iter().enumerate() {
                let t2 = self.axis2.coord(i2);
                w.write_record([t1.to_string(), t2.to_string(), fmt_value(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a grid written by [`ScalarGrid::write_csv`]; axis names are
    /// taken from the arguments, failures are not recoverable from CSV.
    pub fn read_csv<R: std::io::Read>(reader: R, names: [&str; 2]) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["theta1", "theta2", "value"] {
            return Err(Error::Format("grid CSV header must be theta1,theta2,value".into()));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Format("short grid row".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number in grid CSV: {e}")))
            };
            rows.push([parse(0)?, parse(1)?, parse(2)?]);
        }
        let mut t1: Vec<f64> = Vec::new();
        for row in &rows {
            if t1.last() != Some(&row[0]) {
                t1.push(row[0]);
            }
        }
        let n1 = t1.len();
        if n1 < 2 || rows.len() % n1 != 0 {
            return Err(Error::Format("grid CSV is not a full rectangular grid".into()));
        }
        let n2 = rows.len() / n1;
        if n2 < 2 {
            return Err(Error::Format("grid CSV is not a full rectangular grid".into()));
        }
        let values = rows.chunks(n2).map(|c| c.iter().map(|r| r[2]).collect()).collect();
        Ok(Self {
            axis1: Axis::new(names[0], rows[0][0], rows[rows.len() - 1][0], n1)?,
            axis2: Axis::new(names[1], rows[0][1], rows[n2 - 1][1], n2)?,
            values,
            failures: Vec::new(),
        })
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        v.to_string()
    }
}

fn axes(spec: &ModelSpec, bx: &ParamBox, resolution: usize) -> Result<(Axis, Axis)> {
    if spec.n_params() != 2 || bx.dim() != 2 {
        return Err(Error::invalid("grid scans need exactly two inferred parameters"));
    }
    Ok((
        Axis::new(spec.inferred()[0].clone(), bx.lo[0], bx.hi[0], resolution)?,
        Axis::new(spec.inferred()[1].clone(), bx.lo[1], bx.hi[1], resolution)?,
    ))
}

/// Normalised log-likelihood `ℓ(θ) − ℓ(θ̂)` at every grid node.
pub fn loglik_grid(spec: &ModelSpec, data: &Dataset, mle: &MleResult, bx: &ParamBox, resolution: usize) -> Result<ScalarGrid> {
    let (a1, a2) = axes(spec, bx, resolution)?;
    Ok(ScalarGrid::evaluate(a1, a2, |theta| {
        normalized_log_likelihood_values(spec, &theta, data, mle)
    }))
}

/// Scalar curvature of `metric` at every grid node; singular or
/// indefinite metrics are recorded as failures.
pub fn curvature_grid(metric: &dyn MetricField, names: [&str; 2], bx: &ParamBox, resolution: usize) -> Result<ScalarGrid> {
    if metric.dim() != 2 || bx.dim() != 2 {
        return Err(Error::invalid("grid scans need a two-dimensional metric"));
    }
    let a1 = Axis::new(names[0], bx.lo[0], bx.hi[0], resolution)?;
    let a2 = Axis::new(names[1], bx.lo[1], bx.hi[1], resolution)?;
    Ok(ScalarGrid::evaluate(a1, a2, |theta| scalar_curvature(metric, &theta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_endpoints_inclusive() {
        let a = Axis::new("x", 0.2, 1.2, 11).unwrap();
        assert_eq!(a.coord(0), 0.2);
        assert_eq!(a.coord(10), 1.2);
        assert!((a.coord(5) - 0.7).abs() < 1e-15);
        assert!(Axis::new("x", 1.0, 1.0, 5).is_err());
        assert!(Axis::new("x", 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn failures_become_nan() {
        let a = Axis::new("x", -1.0, 1.0, 5).unwrap();
        let g = ScalarGrid::evaluate(a.clone(), a, |t| {
            if t[0] == 0.0 {
                Err(Error::invalid("centre"))
            } else {
                Ok(t[0] + t[1])
            }
        });
        assert_eq!(g.failures.len(), 5);
        assert!(g.values[2].iter().all(|v| v.is_nan()));
        assert_eq!(g.max().unwrap(), (4, 4, 2.0));
    }

    #[test]
    fn csv_round_trip() {
        let a = Axis::new("x", 0.0, 1.0, 3).unwrap();
        let b = Axis::new("y", -2.0, 2.0, 4).unwrap();
        let g = ScalarGrid::evaluate(a, b, |t| if t[1] > 1.0 { Ok(f64::NAN) } else { Ok(t[0] * t[1]) });
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta1,theta2,value\n0,-2,"));
        assert_eq!(text.lines().count(), 13);
        let back = ScalarGrid::read_csv(&buf[..], ["x", "y"]).unwrap();
        assert_eq!(back.axis1, g.axis1);
        assert_eq!(back.axis2, g.axis2);
        for (r, s) in back.values.iter().zip(&g.values) {
            for (x, y) in r.iter().zip(s) {
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
    }
}
