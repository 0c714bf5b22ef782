//! End-to-end acceptance checks. Runs without the libtest harness so that
//! one PASS/FAIL line per criterion is always printed. Failing checks make
//! the run fail only when `ACCEPTANCE_STRICT=1` is set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use infogeo_cli::commands::{self, RenderInputs};
use infogeo_cli::Experiment;
use infogeo_core::geometry::{curvature_at, curve_length, scalar_curvature, FisherMetric, SampledPath};
use infogeo_core::gridscan::curvature_grid;
use infogeo_core::likelihood::{chi2_quantile, log_likelihood, Design};
use infogeo_core::models::{jacobian_values, solve_values, Family, ModelSpec, ParamBox, SIGMA};
use infogeo_core::synth::rng::keyed_uniform;

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Experiment {
    Experiment::load(&configs_dir().join(format!("{name}.json"))).expect("bundled config is valid")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64, detail: String) -> Outcome {
    check(
        elapsed <= Duration::from_secs(limit_s),
        format!("{detail}; {:.2}s (limit {limit_s}s)", elapsed.as_secs_f64()),
    )
}

fn delta() -> f64 {
    chi2_quantile(2, 0.95).unwrap()
}

/// Runs every stage of a bundled pipeline into `out` at a reduced grid
/// resolution.
fn run_pipeline(exp: &Experiment, out: &Path) -> Result<Vec<infogeo_core::geometry::GeodesicCurve>, String> {
    let e = |err: infogeo_cli::CliError| err.to_string();
    commands::cmd_simulate(exp, out).map_err(e)?;
    let data = commands::load_data(exp, &out.join(commands::DATA_FILE)).map_err(e)?;
    let mle = commands::cmd_fit(exp, &data, out).map_err(e)?;
    commands::cmd_region(exp, &data, &mle, out).map_err(e)?;
    let curves = commands::cmd_geodesics(exp, &mle, out).map_err(e)?;
    commands::cmd_curvature(exp, out).map_err(e)?;
    commands::cmd_loglik(exp, &data, &mle, out).map_err(e)?;
    let inputs = RenderInputs {
        grid: out.join(commands::LOGLIK_FILE),
        region: Some(out.join(commands::REGION_FILE)),
        geodesics: Some(out.join(commands::GEODESICS_FILE)),
        mle: Some(out.join(commands::MLE_FILE)),
    };
    commands::cmd_render(exp, &inputs, out).map_err(e)?;
    Ok(curves)
}

const PIPELINE_RESOLUTION: usize = 20;

fn pipeline_experiment(name: &str) -> Experiment {
    load(name).with_resolution(PIPELINE_RESOLUTION).unwrap()
}

// 1
fn univariate_normal_curvature() -> Outcome {
    let start = Instant::now();
    let spec = ModelSpec::build(Family::UnivariateNormal, &[], &["mu", "sigma"], &["x"]).unwrap();
    let metric = FisherMetric::new(spec, Design::uniform(vec![0.0], 10).unwrap());
    let bx = ParamBox::new(vec![0.2, 0.2], vec![1.2, 1.2]).unwrap();
    let grid = curvature_grid(&metric, ["mu", "sigma"], &bx, 20).map_err(|e| e.to_string())?;
    let err = grid
        .values
        .iter()
        .flatten()
        .map(|v| (v + 0.1).abs())
        .fold(0.0, f64::max);
    let ok = grid.failures.is_empty() && err <= 1e-3;
    within(start.elapsed(), 10, format!("max |Sc + 0.1| = {err:.2e} over 400 cells"))
        .and_then(|d| check(ok, d))
}

// 2
fn mvn_flatness() -> Outcome {
    let start = Instant::now();
    let spec = ModelSpec::build(Family::MultivariateNormal2d, &[(SIGMA, 0.3)], &["mu1", "mu2"], &["x1", "x2"]).unwrap();
    let metric = FisherMetric::new(spec, Design::uniform(vec![0.0], 10).unwrap());
    let (mut sc_max, mut riem_max) = (0.0f64, 0.0f64);
    for i in 0..20 {
        for j in 0..20 {
            let theta = [-1.0 + 2.0 * i as f64 / 19.0, -1.0 + 2.0 * j as f64 / 19.0];
            let t = curvature_at(&metric, &theta).map_err(|e| e.to_string())?;
            sc_max = sc_max.max(t.scalar.abs());
            riem_max = riem_max.max(t.riemann.max_abs());
        }
    }
    let ok = sc_max <= 1e-6 && riem_max <= 1e-8;
    within(start.elapsed(), 10, format!("max |Sc| = {sc_max:.2e}, max |R| = {riem_max:.2e}"))
        .and_then(|d| check(ok, d))
}

// 3
fn mvn_geodesic_region(out: &Path) -> Outcome {
    let exp = pipeline_experiment("mvn-means");
    let curves = run_pipeline(&exp, out)?;
    let mle = commands::load_mle(&exp, &out.join(commands::MLE_FILE)).map_err(|e| e.to_string())?;
    let c = mle.theta_hat.values();
    let radius = 0.3 * (delta() / 10.0).sqrt();
    let region = commands::read_points(&out.join(commands::REGION_FILE)).map_err(|e| e.to_string())?;
    let summary: commands::RegionSummary =
        serde_json::from_str(&std::fs::read_to_string(out.join(commands::SUMMARY_FILE)).unwrap()).unwrap();
    let dev = |p: &[f64]| ((p[0] - c[0]).hypot(p[1] - c[1]) - radius).abs() / radius;
    let region_dev = region.iter().map(|p| dev(p)).fold(0.0, f64::max);
    let geo_dev = curves.iter().map(|g| dev(g.endpoint())).fold(0.0, f64::max);
    let ok = summary.closed && region.len() > 10 && curves.len() == 20 && region_dev <= 1e-3 && geo_dev <= 1e-3;
    check(
        ok,
        format!(
            "radius {radius:.6}; contour ({} pts) max radial deviation {region_dev:.2e}·r, {} geodesic endpoints {geo_dev:.2e}·r",
            region.len(),
            curves.len()
        ),
    )
}

// 4
fn geodesic_invariants(out: &Path) -> Outcome {
    let names = [
        "logistic-early-mid",
        "logistic-early-mid-late",
        "logistic-mid-late",
        "logistic-high-curvature",
        "linear",
        "exponential",
        "sir-infected-only",
        "sir-all-species",
    ];
    let target = delta().sqrt();
    let mut worst_speed = 0.0f64;
    let mut worst_length = 0.0f64;
    let mut count = 0;
    let mut problems = Vec::new();
    for name in names {
        let exp = pipeline_experiment(name);
        let curves = run_pipeline(&exp, &out.join(name))?;
        let metric = commands::fisher_metric(&exp);
        for (id, c) in curves.iter().enumerate() {
            count += 1;
            if c.truncated {
                problems.push(format!("{name}#{id} truncated: {:?}", c.note));
                continue;
            }
            let speed = c.speed_residuals(&metric).map_err(|e| e.to_string())?.into_iter().fold(0.0, f64::max);
            let length = curve_length(&metric, &SampledPath::from(c)).map_err(|e| e.to_string())?;
            let length_err = (length - target).abs();
            if speed > 1e-6 || length_err > 1e-5 {
                problems.push(format!("{name}#{id}: speed {speed:.2e}, length error {length_err:.2e}"));
            }
            worst_speed = worst_speed.max(speed);
            worst_length = worst_length.max(length_err);
        }
    }
    let detail = format!(
        "{count} geodesics in {} configs; max |vᵀGv − 1| = {worst_speed:.2e}, max |L − √Δ| = {worst_length:.2e}",
        names.len()
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

// 5
fn curvature_scaling() -> Outcome {
    let exp = load("logistic-high-curvature");
    let metric_with = |n: usize| FisherMetric::new(exp.spec.clone(), Design::uniform(exp.design.times.clone(), n).unwrap());
    let (m10, m50) = (metric_with(10), metric_with(50));
    let mut worst = 0.0f64;
    for k in 0..10 {
        let f = k as f64 / 9.0;
        let theta = [0.8 + 0.2 * f, 0.1 + 0.2 * (1.0 - f)];
        let s10 = scalar_curvature(&m10, &theta).map_err(|e| e.to_string())?;
        let s50 = scalar_curvature(&m50, &theta).map_err(|e| e.to_string())?;
        let expected = s10 * 10.0 / 50.0;
        worst = worst.max(((s50 - expected) / expected).abs());
    }
    let truth = exp.true_point();
    let sc_truth = scalar_curvature(&m10, truth.values()).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-4 && sc_truth < 0.0,
        format!("max relative error {worst:.2e} over 10 points; Sc(truth, N=10) = {sc_truth:.4e}"),
    )
}

// 6
fn jacobians() -> Outcome {
    let start = Instant::now();
    let lin_times = vec![0.1, 0.25, 0.5];
    let log_times = vec![2.74, 6.84, 10.95];
    type Sampler = fn(&str, f64) -> f64;
    let range: Sampler = |name, u| {
        let (lo, hi) = match name {
            "mu" | "mu1" | "mu2" => (-2.0, 2.0),
            SIGMA => (0.1, 3.0),
            "a" | "r" => (0.1, 2.0),
            "C0" => (0.1, 10.0),
            "K" => (20.0, 100.0),
            _ => unreachable!(),
        };
        lo + u * (hi - lo)
    };
    let cases: Vec<(Family, Vec<&str>, Vec<&str>, &Vec<f64>)> = vec![
        (Family::UnivariateNormal, vec!["mu", SIGMA], vec!["x"], &lin_times),
        (Family::MultivariateNormal2d, vec!["mu1", "mu2"], vec!["x1", "x2"], &lin_times),
        (Family::MultivariateNormal2d, vec!["mu1", SIGMA], vec!["x1", "x2"], &lin_times),
        (Family::Linear, vec!["a", "C0"], vec!["C"], &lin_times),
        (Family::Linear, vec!["a", SIGMA], vec!["C"], &lin_times),
        (Family::Exponential, vec!["a", "C0"], vec!["C"], &lin_times),
        (Family::Exponential, vec!["C0", SIGMA], vec!["C"], &lin_times),
        (Family::Logistic, vec!["r", "C0"], vec!["C"], &log_times),
        (Family::Logistic, vec!["r", "K"], vec!["C"], &log_times),
        (Family::Logistic, vec!["C0", "K"], vec!["C"], &log_times),
        (Family::Logistic, vec!["r", SIGMA], vec!["C"], &log_times),
    ];
    let mut worst = 0.0f64;
    let mut points = 0;
    for (case, (family, inferred, species, times)) in cases.iter().enumerate() {
        for p in 0..20u64 {
            let u = |k: u64| keyed_uniform(6, &[case as u64, p, k]);
            let fixed: Vec<(&str, f64)> = family
                .parameters()
                .iter()
                .enumerate()
                .filter(|(_, n)| !inferred.contains(n))
                .map(|(k, n)| (*n, range(n, u(10 + k as u64))))
                .collect();
            let spec = ModelSpec::build(*family, &fixed, inferred, species).unwrap();
            let x: Vec<f64> = inferred.iter().enumerate().map(|(k, n)| range(n, u(k as u64))).collect();
            let analytic = jacobian_values(&spec, &x, times).map_err(|e| e.to_string())?;
            let rows = analytic.nrows();
            for k in 0..2 {
                let h = 1e-6 * x[k].abs();
                let (mut up, mut down) = (x.clone(), x.clone());
                up[k] += h;
                down[k] -= h;
                let stacked = |v: &[f64]| -> Vec<f64> {
                    let out = solve_values(&spec, v, times).unwrap();
                    let mut s: Vec<f64> = out.means.into_iter().flatten().collect();
                    if spec.sigma_inferred() {
                        s.push(out.sigma);
                    }
                    s
                };
                let (fu, fd) = (stacked(&up), stacked(&down));
                for r in 0..rows {
                    let fdv = (fu[r] - fd[r]) / (2.0 * h);
                    let err = (analytic[(r, k)] - fdv).abs() / fdv.abs().max(1e-8);
                    worst = worst.max(err);
                }
            }
            points += 1;
        }
    }
    let ok = worst <= 1e-5;
    within(
        start.elapsed(),
        5,
        format!("{points} points over {} family/parameter cases; max relative error {worst:.2e}", cases.len()),
    )
    .and_then(|d| check(ok, d))
}

// 7
fn fisher_definition() -> Outcome {
    let start = Instant::now();
    let spec = ModelSpec::build(Family::UnivariateNormal, &[], &["mu", SIGMA], &["x"]).unwrap();
    let design = Design::uniform(vec![0.0], 1).unwrap();
    let theta = spec.point(vec![0.7, 0.5]).unwrap();
    let exact = infogeo_core::geometry::fisher_metric(&spec, &design, &theta).map_err(|e| e.to_string())?.matrix;
    let mc = infogeo_core::geometry::monte_carlo_fisher(&spec, &design, &theta, 100_000, 7).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            // off-diagonal entries vanish exactly, so they are measured
            // against the geometric mean of the diagonal
            let scale = if i == j { exact[(i, i)] } else { (exact[(0, 0)] * exact[(1, 1)]).sqrt() };
            worst = worst.max((mc[(i, j)] - exact[(i, j)]).abs() / scale);
        }
    }
    let ok = worst <= 0.05;
    within(
        start.elapsed(),
        10,
        format!(
            "exact diag({}, {}), Monte-Carlo [[{:.4}, {:.4}], [{:.4}, {:.4}]]; max relative deviation {:.2}%",
            exact[(0, 0)],
            exact[(1, 1)],
            mc[(0, 0)],
            mc[(0, 1)],
            mc[(1, 0)],
            mc[(1, 1)],
            100.0 * worst
        ),
    )
    .and_then(|d| check(ok, d))
}

// 8
fn wilks_coverage() -> Outcome {
    let start = Instant::now();
    let base = load("mvn-means");
    let threshold = -delta() / 2.0;
    let replicates = 500u64;
    let mut covered = 0;
    for seed in 0..replicates {
        let exp = base.clone().with_seed(seed);
        let data = commands::simulate(&exp).map_err(|e| e.to_string())?;
        let mle = commands::fit(&exp, &data).map_err(|e| e.to_string())?;
        let at_truth = log_likelihood(&exp.spec, &exp.true_point(), &data).map_err(|e| e.to_string())?;
        if at_truth - mle.loglik_at_mle >= threshold {
            covered += 1;
        }
    }
    let rate = covered as f64 / replicates as f64;
    within(
        start.elapsed(),
        60,
        format!("truth inside the 95% region in {covered}/{replicates} replicates ({:.1}%)", 100.0 * rate),
    )
    .and_then(|d| check((0.93..=0.97).contains(&rate), d))
}

// 9
fn non_identifiability(out: &Path) -> Outcome {
    let summary = |name: &str| -> Result<commands::RegionSummary, String> {
        let text = std::fs::read_to_string(out.join(name).join(commands::SUMMARY_FILE)).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    let late = summary("logistic-mid-late")?;
    let full = summary("logistic-early-mid-late")?;
    check(
        late.open_region && !full.open_region && full.closed,
        format!(
            "mid-late: open_region={} ({}); early-mid-late: open_region={}, closed={}",
            late.open_region,
            late.note.as_deref().unwrap_or(""),
            full.open_region,
            full.closed
        ),
    )
}

// 10
fn sir_conservation() -> Outcome {
    let start = Instant::now();
    let (s0, i0) = (762.0 / 763.0, 1.0 / 763.0);
    let spec = ModelSpec::sir(&[(SIGMA, 0.05)], &["beta", "gamma"], &["S", "I", "R"], &[("S", s0), ("I", i0), ("R", 0.0)]).unwrap();
    let (beta, gamma) = (1.6633, 0.44036);
    let times: Vec<f64> = (1..=500).map(|k| k as f64 * 0.1).collect();
    let out = solve_values(&spec, &[beta, gamma], &times).map_err(|e| e.to_string())?;
    let drift = out.means.iter().map(|m| (m.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    let s_inf = out.means.last().unwrap()[0];
    let residual = ((s_inf / s0).ln() - beta / gamma * (s_inf - 1.0)).abs();
    within(
        start.elapsed(),
        5,
        format!("max |S+I+R−1| = {drift:.2e}; S(50) = {s_inf:.6}, final-size residual {residual:.2e}"),
    )
    .and_then(|d| check(drift <= 1e-9 && residual <= 1e-3, d))
}

// 11
fn sir_curvature_sign() -> Outcome {
    let exp = load("sir-infected-only");
    let metric = commands::fisher_metric(&exp);
    let sc = scalar_curvature(&metric, exp.true_point().values()).map_err(|e| e.to_string())?;
    check(sc > 0.0, format!("Sc at (beta, gamma) = (1.6633, 0.44036) is {sc:.4e}"))
}

// 12
fn determinism(first: &Path, second: &Path) -> Outcome {
    let mut compared = 0;
    let mut names: Vec<String> = std::fs::read_dir(configs_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut mismatches = Vec::new();
    for name in &names {
        let exp = pipeline_experiment(name);
        let a = first.join(name);
        if !a.join(commands::DATA_FILE).exists() {
            run_pipeline(&exp, &a)?;
        }
        run_pipeline(&exp, &second.join(name))?;
        let files: BTreeMap<String, PathBuf> = std::fs::read_dir(&a)
            .unwrap()
            .filter_map(|e| e.ok())
            .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
            .filter(|(n, _)| n.ends_with(".csv") || n.ends_with(".json"))
            .collect();
        for (file, path) in files {
            compared += 1;
            let other = second.join(name).join(&file);
            if std::fs::read(&path).ok() != std::fs::read(&other).ok() {
                mismatches.push(format!("{name}/{file}"));
            }
        }
    }
    check(
        mismatches.is_empty() && compared > 0,
        format!(
            "{compared} CSV/JSON artifacts from {} pipelines compared byte-for-byte{}",
            names.len(),
            if mismatches.is_empty() { String::new() } else { format!("; differ: {}", mismatches.join(", ")) }
        ),
    )
}

fn main() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let (a, b) = (first.path(), second.path());

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("univariate-normal scalar curvature is -1/N", Box::new(univariate_normal_curvature)),
        ("multivariate-normal means manifold is flat", Box::new(mvn_flatness)),
        ("Gaussian confidence region is the geodesic circle", Box::new(move || mvn_geodesic_region(&a.join("mvn-means")))),
        ("geodesics are unit speed with length sqrt(Delta)", Box::new(move || geodesic_invariants(a))),
        ("scalar curvature scales as 1/N", Box::new(curvature_scaling)),
        ("analytic Jacobians match finite differences", Box::new(jacobians)),
        ("Fisher information equals score variance", Box::new(fisher_definition)),
        ("Wilks coverage of the 95% region", Box::new(wilks_coverage)),
        ("practical non-identifiability is detected", Box::new(move || non_identifiability(a))),
        ("SIR conservation and final size", Box::new(sir_conservation)),
        ("SIR infected-only curvature is positive", Box::new(sir_curvature_sign)),
        ("bundled pipelines are deterministic", Box::new(move || determinism(a, b))),
    ];

    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1}s]: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1}s]: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    // failures are reported, not fatal, unless ACCEPTANCE_STRICT is set
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v != "0");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}
