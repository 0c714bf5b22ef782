use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use infogeo_cli::commands;
use infogeo_cli::Experiment;
use infogeo_core::models::solve_values;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn infogeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infogeo")).args(args).output().unwrap()
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    infogeo(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

fn write_config(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = std::fs::read_to_string(configs().join(format!("{name}.json"))).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut value);
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_one_row_per_observation() {
    let dir = tempfile::tempdir().unwrap();
    for (name, rows) in [("logistic-early-mid-late", 30), ("sir-infected-only", 30), ("sir-all-species", 27)] {
        let out = dir.path().join(name);
        let o = run("simulate", &configs().join(format!("{name}.json")), &out, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(data_rows(&out.join("data.csv")), rows, "{name}");
    }
}

#[test]
fn noise_free_simulation_reproduces_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "logistic-early-mid-late", |v| v["design"]["noise_sd"] = 0.0.into());
    let out = dir.path().join("out");
    assert!(run("simulate", &cfg, &out, &[]).status.success());
    let exp = Experiment::load(&cfg).unwrap();
    let data = commands::load_data(&exp, &out.join("data.csv")).unwrap();
    let means = solve_values(&exp.spec, exp.true_point().values(), &exp.design.times).unwrap().means;
    for (rows, mu) in data.observations().iter().zip(&means) {
        assert!(rows.iter().all(|r| r[0] == mu[0]));
    }
}

#[test]
fn fit_recovers_noise_free_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "linear", |v| v["design"]["noise_sd"] = 0.0.into());
    let out = dir.path().join("out");
    assert!(run("simulate", &cfg, &out, &[]).status.success());
    let o = run("fit", &cfg, &out, &["--data", out.join("data.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("mle.json")).unwrap()).unwrap();
    assert!((report["theta_hat"]["a"].as_f64().unwrap() - 0.9131).abs() <= 1e-6, "{report}");
    assert!((report["theta_hat"]["C0"].as_f64().unwrap() - 0.7237).abs() <= 1e-6, "{report}");
}

#[test]
fn fit_matches_normal_closed_form_and_dominates_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("univariate-normal.json");
    let out = dir.path().join("out");
    assert!(run("simulate", &cfg, &out, &[]).status.success());
    assert!(run("fit", &cfg, &out, &[]).status.success());
    let exp = Experiment::load(&cfg).unwrap();
    let data = commands::load_data(&exp, &out.join("data.csv")).unwrap();
    let x: Vec<f64> = data.observations()[0].iter().map(|r| r[0]).collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mle = commands::load_mle(&exp, &out.join("mle.json")).unwrap();
    assert!((mle.theta_hat.values()[0] - mean).abs() <= 1e-6);
    assert!((mle.theta_hat.values()[1] - sd).abs() <= 1e-6);
    assert!(mle.loglik_at_mle >= commands::loglik_at_truth(&exp, &data).unwrap());
}

#[test]
fn univariate_normal_curvature_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("curvature", &configs().join("univariate-normal.json"), dir.path(), &["--resolution", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("curvature.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta1,theta2,value"));
    let values: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 100);
    assert!(values.iter().all(|v| (v + 0.1).abs() <= 1e-3));
}

#[test]
fn full_pipeline_renders_valid_svg_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("mvn-means.json");
    let runs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("run{k}"))).collect();
    for out in &runs {
        for cmd in ["simulate", "fit", "region", "geodesics", "curvature", "loglik", "render"] {
            let o = run(cmd, &cfg, out, &["--resolution", "10"]);
            assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        }
    }
    let svg = std::fs::read_to_string(runs[0].join("figure.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 21);
    let mut names: Vec<_> = std::fs::read_dir(&runs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let (a, b) = (std::fs::read(runs[0].join(&name)).unwrap(), std::fs::read(runs[1].join(&name)).unwrap());
        assert!(a == b, "{name:?} differs");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(runs[0].join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["closed"], true);
}

#[test]
fn seed_flag_changes_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("linear.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("simulate", &cfg, &a, &["--seed", "1"]).status.success());
    assert!(run("simulate", &cfg, &b, &["--seed", "2"]).status.success());
    assert_ne!(std::fs::read(a.join("data.csv")).unwrap(), std::fs::read(b.join("data.csv")).unwrap());
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("simulate", &dir.path().join("missing.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), "linear", |v| v["analysis"]["alpha"] = 1.5.into());
    let o = run("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("analysis.alpha"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "linear", |v| v["design"]["times"] = serde_json::json!([0.5, 0.1]));
    let o = run("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("design"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "linear", |v| v["model"]["family"] = "cubic".into());
    let o = run("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.family"), "{}", stderr(&o));

    let o = run("curvature", &configs().join("linear.json"), &out, &["--resolution", "1"]);
    assert_eq!(o.status.code(), Some(2));
    // nothing is written when validation fails
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn singular_metric_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // a single observation time leaves (a, C0) unidentifiable: rank-one metric
    let cfg = write_config(dir.path(), "linear", |v| v["design"]["times"] = serde_json::json!([0.5]));
    let out = dir.path().join("out");
    assert!(run("simulate", &cfg, &out, &[]).status.success());
    assert!(run("fit", &cfg, &out, &[]).status.success());
    let o = run("geodesics", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn data_file_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run("simulate", &configs().join("linear.json"), &out, &[]).status.success());
    let o = run("fit", &configs().join("logistic-early-mid.json"), &dir.path().join("o2"), &["--data", out.join("data.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

/// Every key a configuration can serialize is declared in the shipped schema.
#[test]
fn schema_covers_config_fields() {
    fn walk(value: &serde_json::Value, schema: &serde_json::Value, path: &str) {
        let Some(obj) = value.as_object() else { return };
        let Some(props) = schema.get("properties").and_then(|p| p.as_object()) else { return };
        for (key, child) in obj {
            let sub = props.get(key).unwrap_or_else(|| panic!("schema lacks {path}.{key}"));
            walk(child, sub, &format!("{path}.{key}"));
        }
    }
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(configs().join("../docs/config.schema.json")).unwrap()).unwrap();
    for entry in std::fs::read_dir(configs()).unwrap() {
        let mut exp = Experiment::load(&entry.unwrap().path()).unwrap();
        exp.config.design.noise_sd = Some(0.0);
        walk(&serde_json::to_value(&exp.config).unwrap(), &schema, "");
    }
}
