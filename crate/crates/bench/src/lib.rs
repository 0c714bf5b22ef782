//! Fixtures shared by the benchmarks.

use infogeo_core::geometry::FisherMetric;
use infogeo_core::likelihood::Design;
use infogeo_core::models::{Family, ModelSpec, SIGMA};

pub const LOGISTIC_TRUTH: [f64; 2] = [0.9131, 0.7237];
pub const SIR_TRUTH: [f64; 2] = [1.6633, 0.44036];

pub fn logistic_metric() -> FisherMetric {
    let spec = ModelSpec::build(Family::Logistic, &[("K", 79.74), (SIGMA, 2.301)], &["r", "C0"], &["C"]).unwrap();
    FisherMetric::new(spec, Design::uniform(vec![2.74, 6.84, 10.95], 10).unwrap())
}

pub fn sir_spec() -> ModelSpec {
    ModelSpec::sir(&[(SIGMA, 0.05)], &["beta", "gamma"], &["I"], &[("S", 762.0 / 763.0), ("I", 1.0 / 763.0), ("R", 0.0)])
        .unwrap()
}

pub fn sir_metric() -> FisherMetric {
    FisherMetric::new(sir_spec(), Design::uniform(vec![4.0, 7.0, 10.0], 10).unwrap())
}
