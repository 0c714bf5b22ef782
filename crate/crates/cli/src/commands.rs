//! The pipeline stages behind each subcommand. Every stage has a pure
//! function returning its result and a `cmd_*` wrapper writing artifacts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use infogeo_core::geometry::{geodesic_fan, FisherMetric, GeodesicCurve, GeodesicOptions};
use infogeo_core::gridscan::{curvature_grid, loglik_grid, ScalarGrid};
use infogeo_core::likelihood::{
    chi2_quantile, log_likelihood, mle_with, trace_confidence_contour, ContourOptions, ContourPolyline, Dataset,
    MleOptions, MleResult,
};
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::error::CliError;
use crate::output::{write_atomic, write_json};
use crate::render::{render_svg, Figure};

pub const DATA_FILE: &str = "data.csv";
pub const MLE_FILE: &str = "mle.json";
pub const REGION_FILE: &str = "region.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const GEODESICS_FILE: &str = "geodesics.csv";
pub const GEODESICS_SUMMARY_FILE: &str = "geodesics.json";
pub const CURVATURE_FILE: &str = "curvature.csv";
pub const CURVATURE_FAILURES_FILE: &str = "curvature_failures.json";
pub const LOGLIK_FILE: &str = "loglik.csv";
pub const LOGLIK_FAILURES_FILE: &str = "loglik_failures.json";
pub const FIGURE_FILE: &str = "figure.svg";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(format!("writing {}", path.display()), e)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------- simulate

pub fn simulate(exp: &Experiment) -> Result<Dataset, CliError> {
    Ok(infogeo_core::synth::generate(&exp.synth())?)
}

pub fn cmd_simulate(exp: &Experiment, out: &Path) -> Result<PathBuf, CliError> {
    let data = simulate(exp)?;
    let path = out.join(DATA_FILE);
    write_atomic(&path, |w| Ok(data.write_csv(w)?))?;
    Ok(path)
}

/// Reads a dataset and checks it against the configured design.
pub fn load_data(exp: &Experiment, path: &Path) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("cannot read data {}: {e}", path.display())))?;
    let data = Dataset::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if data.species() != exp.spec.species() {
        return Err(CliError::Input(format!(
            "{}: species {:?} do not match the configured {:?}",
            path.display(),
            data.species(),
            exp.spec.species()
        )));
    }
    if data.times() != exp.design.times.as_slice() {
        return Err(CliError::Input(format!(
            "{}: observation times {:?} do not match the configured design {:?}",
            path.display(),
            data.times(),
            exp.design.times
        )));
    }
    Ok(data)
}

// --------------------------------------------------------------------- fit

/// The on-disk form of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    pub parameters: Vec<String>,
    pub theta_hat: BTreeMap<String, f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MleReport {
    pub fn from_result(r: &MleResult) -> Self {
        Self {
            parameters: r.theta_hat.names().to_vec(),
            theta_hat: r
                .theta_hat
                .names()
                .iter()
                .cloned()
                .zip(r.theta_hat.values().iter().copied())
                .collect(),
            loglik: r.loglik_at_mle,
            converged: r.converged,
            iterations: r.iterations,
            evaluations: r.evaluations,
            warnings: r.warnings.clone(),
        }
    }

    pub fn to_result(&self, exp: &Experiment) -> Result<MleResult, CliError> {
        if self.parameters != exp.spec.inferred() {
            return Err(CliError::Input(format!(
                "fit is for parameters {:?}, config infers {:?}",
                self.parameters,
                exp.spec.inferred()
            )));
        }
        let values = self
            .parameters
            .iter()
            .map(|n| {
                self.theta_hat
                    .get(n)
                    .copied()
                    .ok_or_else(|| CliError::Input(format!("fit is missing theta_hat.{n}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MleResult {
            theta_hat: exp.spec.point(values)?,
            loglik_at_mle: self.loglik,
            iterations: self.iterations,
            evaluations: self.evaluations,
            converged: self.converged,
            warnings: self.warnings.clone(),
        })
    }
}

/// Fits from the centre of the analysis box and, when it lies inside the
/// box, from the true parameter values; the better fit is kept.
pub fn fit(exp: &Experiment, data: &Dataset) -> Result<MleResult, CliError> {
    let opts = MleOptions {
        multistart: exp.config.analysis.multistart,
        seed: exp.config.design.seed,
        ..MleOptions::default()
    };
    let centre = exp.spec.point(exp.bounds.center())?;
    let mut best = mle_with(&exp.spec, data, &centre, &exp.bounds, &opts)?;
    let truth = exp.true_point();
    let strictly_inside = truth
        .values()
        .iter()
        .zip(exp.bounds.lo.iter().zip(&exp.bounds.hi))
        .all(|(v, (l, h))| v > l && v < h);
    if strictly_inside {
        let other = mle_with(&exp.spec, data, &truth, &exp.bounds, &opts)?;
        if other.loglik_at_mle > best.loglik_at_mle {
            best = MleResult {
                iterations: best.iterations + other.iterations,
                evaluations: best.evaluations + other.evaluations,
                ..other
            };
        } else {
            best.iterations += other.iterations;
            best.evaluations += other.evaluations;
        }
    }
    Ok(best)
}

pub fn cmd_fit(exp: &Experiment, data: &Dataset, out: &Path) -> Result<MleResult, CliError> {
    let result = fit(exp, data)?;
    write_json(&out.join(MLE_FILE), &MleReport::from_result(&result))?;
    Ok(result)
}

pub fn load_mle(exp: &Experiment, path: &Path) -> Result<MleResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read fit {}: {e}", path.display())))?;
    let report: MleReport =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    report.to_result(exp)
}

/// ℓ at the true parameters, for comparison with the fit.
pub fn loglik_at_truth(exp: &Experiment, data: &Dataset) -> Result<f64, CliError> {
    Ok(log_likelihood(&exp.spec, &exp.true_point(), data)?)
}

// ------------------------------------------------------------------ region

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub alpha: f64,
    /// Threshold `−Δ/2` on the normalised log-likelihood.
    pub level: f64,
    pub closed: bool,
    pub open_region: bool,
    pub points: usize,
    pub step: f64,
    pub seed: Option<[f64; 2]>,
    pub theta_hat: [f64; 2],
    pub note: Option<String>,
}

pub fn region(exp: &Experiment, data: &Dataset, mle: &MleResult) -> Result<ContourPolyline, CliError> {
    let opts = ContourOptions::new(exp.bounds.clone());
    Ok(trace_confidence_contour(&exp.spec, data, mle, exp.config.analysis.alpha, &opts)?)
}

pub fn cmd_region(exp: &Experiment, data: &Dataset, mle: &MleResult, out: &Path) -> Result<RegionSummary, CliError> {
    let contour = region(exp, data, mle)?;
    let path = out.join(REGION_FILE);
    write_atomic(&path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(["theta1", "theta2"]).map_err(csv_err(&path))?;
        for p in &contour.points {
            csv.write_record([p[0].to_string(), p[1].to_string()]).map_err(csv_err(&path))?;
        }
        csv.flush().map_err(io_err(&path))
    })?;
    let th = mle.theta_hat.values();
    let summary = RegionSummary {
        alpha: exp.config.analysis.alpha,
        level: contour.level,
        closed: contour.closed,
        open_region: contour.open_region,
        points: contour.points.len(),
        step: contour.step,
        seed: contour.seed,
        theta_hat: [th[0], th[1]],
        note: contour.note.clone(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

// --------------------------------------------------------------- geodesics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSummary {
    pub curve_id: usize,
    pub angle: f64,
    pub target_length: f64,
    pub final_length: f64,
    pub endpoint: [f64; 2],
    pub truncated: bool,
    pub note: Option<String>,
}

/// Geodesic length matching the `alpha` confidence level, `√Δ`.
pub fn confidence_distance(alpha: f64) -> Result<f64, CliError> {
    Ok(chi2_quantile(2, alpha)?.sqrt())
}

pub fn fisher_metric(exp: &Experiment) -> FisherMetric {
    FisherMetric::new(exp.spec.clone(), exp.design.clone())
}

/// Fan of unit-speed geodesics from the MLE, each of length `√Δ`.
pub fn geodesics(exp: &Experiment, mle: &MleResult) -> Result<Vec<GeodesicCurve>, CliError> {
    let length = confidence_distance(exp.config.analysis.alpha)?;
    let metric = fisher_metric(exp);
    Ok(geodesic_fan(
        &metric,
        mle.theta_hat.values(),
        exp.config.analysis.geodesics,
        length,
        &GeodesicOptions::default(),
    )?)
}

pub fn cmd_geodesics(exp: &Experiment, mle: &MleResult, out: &Path) -> Result<Vec<GeodesicCurve>, CliError> {
    let curves = geodesics(exp, mle)?;
    let path = out.join(GEODESICS_FILE);
    write_atomic(&path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(["curve_id", "t", "theta1", "theta2"]).map_err(csv_err(&path))?;
        for (id, c) in curves.iter().enumerate() {
            for (t, p) in c.ts.iter().zip(&c.params) {
                csv.write_record([id.to_string(), t.to_string(), p[0].to_string(), p[1].to_string()])
                    .map_err(csv_err(&path))?;
            }
        }
        csv.flush().map_err(io_err(&path))
    })?;
    let summary: Vec<GeodesicSummary> = curves
        .iter()
        .enumerate()
        .map(|(id, c)| GeodesicSummary {
            curve_id: id,
            angle: c.angle,
            target_length: c.target_length,
            final_length: c.final_length(),
            endpoint: [c.endpoint()[0], c.endpoint()[1]],
            truncated: c.truncated,
            note: c.note.clone(),
        })
        .collect();
    write_json(&out.join(GEODESICS_SUMMARY_FILE), &summary)?;
    Ok(curves)
}

// ------------------------------------------------------------------- grids

pub fn curvature(exp: &Experiment) -> Result<ScalarGrid, CliError> {
    let metric = fisher_metric(exp);
    Ok(curvature_grid(&metric, exp.names(), &exp.bounds, exp.config.analysis.resolution)?)
}

pub fn loglik(exp: &Experiment, data: &Dataset, mle: &MleResult) -> Result<ScalarGrid, CliError> {
    Ok(loglik_grid(&exp.spec, data, mle, &exp.bounds, exp.config.analysis.resolution)?)
}

fn write_grid(grid: &ScalarGrid, csv_path: &Path, failures_path: &Path) -> Result<(), CliError> {
    write_atomic(csv_path, |w| Ok(grid.write_csv(w)?))?;
    write_json(failures_path, &grid.failures)
}

pub fn cmd_curvature(exp: &Experiment, out: &Path) -> Result<ScalarGrid, CliError> {
    let grid = curvature(exp)?;
    write_grid(&grid, &out.join(CURVATURE_FILE), &out.join(CURVATURE_FAILURES_FILE))?;
    Ok(grid)
}

pub fn cmd_loglik(exp: &Experiment, data: &Dataset, mle: &MleResult, out: &Path) -> Result<ScalarGrid, CliError> {
    let grid = loglik(exp, data, mle)?;
    write_grid(&grid, &out.join(LOGLIK_FILE), &out.join(LOGLIK_FAILURES_FILE))?;
    Ok(grid)
}

// ------------------------------------------------------------------ render

/// Inputs to `render`, each optional apart from the grid.
#[derive(Debug, Clone, Default)]
pub struct RenderInputs {
    pub grid: PathBuf,
    pub region: Option<PathBuf>,
    pub geodesics: Option<PathBuf>,
    pub mle: Option<PathBuf>,
}

pub fn read_points(path: &Path) -> Result<Vec<[f64; 2]>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["theta1", "theta2"] {
        return Err(CliError::Input(format!("{}: header must be theta1,theta2", path.display())));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err(path))?;
            Ok([parse(path, rec.get(0))?, parse(path, rec.get(1))?])
        })
        .collect()
}

pub fn read_geodesics(path: &Path) -> Result<Vec<Vec<[f64; 2]>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["curve_id", "t", "theta1", "theta2"] {
        return Err(CliError::Input(format!("{}: header must be curve_id,t,theta1,theta2", path.display())));
    }
    let mut curves: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut last: Option<String> = None;
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        if last.as_deref() != Some(id.as_str()) {
            curves.push(Vec::new());
            last = Some(id);
        }
        curves
            .last_mut()
            .expect("curve started")
            .push([parse(path, rec.get(2))?, parse(path, rec.get(3))?]);
    }
    Ok(curves)
}

fn parse(path: &Path, field: Option<&str>) -> Result<f64, CliError> {
    field
        .ok_or_else(|| CliError::Input(format!("{}: short row", path.display())))?
        .parse()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn render(exp: &Experiment, inputs: &RenderInputs) -> Result<String, CliError> {
    let file = std::fs::File::open(&inputs.grid)
        .map_err(|e| CliError::Input(format!("cannot read grid {}: {e}", inputs.grid.display())))?;
    let grid = ScalarGrid::read_csv(std::io::BufReader::new(file), exp.names())
        .map_err(|e| CliError::Input(format!("{}: {e}", inputs.grid.display())))?;
    let region = inputs.region.as_deref().map(read_points).transpose()?;
    let geodesics = inputs.geodesics.as_deref().map(read_geodesics).transpose()?;
    let mle = inputs
        .mle
        .as_deref()
        .map(|p| load_mle(exp, p))
        .transpose()?
        .map(|m| [m.theta_hat.values()[0], m.theta_hat.values()[1]]);
    let t = exp.true_point();
    let figure = Figure {
        title: exp.config.name.clone(),
        grid: &grid,
        region: region.as_deref(),
        geodesics: geodesics.as_deref(),
        mle,
        truth: Some([t.values()[0], t.values()[1]]),
    };
    Ok(render_svg(&figure))
}

pub fn cmd_render(exp: &Experiment, inputs: &RenderInputs, out: &Path) -> Result<PathBuf, CliError> {
    let svg = render(exp, inputs)?;
    let path = out.join(FIGURE_FILE);
    crate::output::write_text(&path, &svg)?;
    Ok(path)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}
