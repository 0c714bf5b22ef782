//! Experiment configuration: one JSON document per experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use infogeo_core::likelihood::Design;
use infogeo_core::models::{Family, ModelSpec, ParamBox, ParameterPoint, SIGMA};
use infogeo_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub model: ModelConfig,
    /// True values of the inferred parameters; fixed parameters default to
    /// their fixed values.
    pub truth: BTreeMap<String, f64>,
    pub design: DesignConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    pub inferred: Vec<String>,
    pub species: Vec<String>,
    #[serde(default)]
    pub initial_conditions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    Uniform(usize),
    PerTime(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub times: Vec<f64>,
    /// Observations per time point (per species), one number for all times
    /// or one per time.
    pub counts: Counts,
    #[serde(default)]
    pub seed: u64,
    /// Noise level used when simulating, in place of the model's σ; 0 gives
    /// noise-free data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

fn default_alpha() -> f64 {
    0.95
}

fn default_resolution() -> usize {
    infogeo_core::gridscan::DEFAULT_RESOLUTION
}

fn default_geodesics() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Region scanned by the grids, searched by the optimiser and bounding
    /// the traced contour.
    #[serde(rename = "box")]
    pub bounds: BoxConfig,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_geodesics")]
    pub geodesics: usize,
    /// Extra Latin-hypercube starts for the optimiser.
    #[serde(default)]
    pub multistart: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// A validated configuration with the core objects it describes.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub design: Design,
    pub bounds: ParamBox,
    /// Every family parameter at its true value.
    pub truth: BTreeMap<String, f64>,
}

fn field(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<root>".to_string() } else { path };
            field(&path, e.into_inner())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(self) -> Result<Experiment, CliError> {
        let m = &self.model;
        let spec = ModelSpec::new(
            m.family,
            m.fixed.clone(),
            m.inferred.clone(),
            m.species.clone(),
            m.initial_conditions.clone(),
        )
        .map_err(|e| field("model", e))?;

        let mut truth = spec.fixed().clone();
        for (k, v) in &self.truth {
            if !m.family.parameters().contains(&k.as_str()) {
                return Err(field(&format!("truth.{k}"), format!("not a parameter of the {} family", m.family)));
            }
            if let Some(fixed) = spec.fixed().get(k) {
                if fixed != v {
                    return Err(field(&format!("truth.{k}"), format!("differs from the fixed value {fixed}")));
                }
            }
            truth.insert(k.clone(), *v);
        }
        for p in m.family.parameters() {
            let Some(&v) = truth.get(*p) else {
                return Err(field(&format!("truth.{p}"), "missing"));
            };
            let ok = if *p == SIGMA {
                v >= 0.0 && v.is_finite()
            } else {
                m.family.bound(p).contains(v)
            };
            if !ok {
                return Err(field(&format!("truth.{p}"), format!("{v} is out of bounds")));
            }
        }
        if spec.sigma_inferred() && truth[SIGMA] == 0.0 {
            return Err(field("truth.sigma", "must be positive when sigma is inferred"));
        }

        let d = &self.design;
        let counts = match &d.counts {
            Counts::Uniform(n) => vec![*n; d.times.len()],
            Counts::PerTime(c) => c.clone(),
        };
        let design = Design::new(d.times.clone(), counts).map_err(|e| field("design", e))?;
        if let Some(sd) = d.noise_sd {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(field("design.noise_sd", format!("{sd} must be finite and non-negative")));
            }
        }

        let a = &self.analysis;
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return Err(field("analysis.alpha", format!("{} is not in (0, 1)", a.alpha)));
        }
        if a.resolution < 2 {
            return Err(field("analysis.resolution", "must be at least 2"));
        }
        if a.geodesics == 0 {
            return Err(field("analysis.geodesics", "must be at least 1"));
        }
        for (k, name) in spec.inferred().iter().enumerate() {
            let (lo, hi) = (a.bounds.lo[k], a.bounds.hi[k]);
            if !(lo < hi) {
                return Err(field(&format!("analysis.box[{k}]"), format!("empty interval [{lo}, {hi}]")));
            }
            let b = m.family.bound(name);
            if !(b.contains(lo) && b.contains(hi)) {
                return Err(field(
                    &format!("analysis.box[{k}]"),
                    format!("[{lo}, {hi}] leaves the domain of `{name}` [{}, {}]", b.lo, b.hi),
                ));
            }
        }
        let bounds = ParamBox::new(a.bounds.lo.to_vec(), a.bounds.hi.to_vec()).map_err(|e| field("analysis.box", e))?;

        Ok(Experiment {
            config: self,
            spec,
            design,
            bounds,
            truth,
        })
    }
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        ExperimentConfig::load(path)?.validate()
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        ExperimentConfig::from_json(text)?.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.design.seed = seed;
        self
    }

    pub fn with_resolution(mut self, resolution: usize) -> Result<Self, CliError> {
        if resolution < 2 {
            return Err(CliError::Config("--resolution must be at least 2".into()));
        }
        self.config.analysis.resolution = resolution;
        Ok(self)
    }

    pub fn synth(&self) -> SynthConfig {
        let mut theta_true = self.truth.clone();
        if let Some(sd) = self.config.design.noise_sd {
            theta_true.insert(SIGMA.to_string(), sd);
        }
        SynthConfig {
            spec: self.spec.clone(),
            theta_true,
            design: self.design.clone(),
            seed: self.config.design.seed,
        }
    }

    /// True values of the inferred parameters.
    pub fn true_point(&self) -> ParameterPoint {
        let values = self.spec.inferred().iter().map(|n| self.truth[n]).collect();
        self.spec.point(values).expect("validated truth")
    }

    pub fn names(&self) -> [&str; 2] {
        [&self.spec.inferred()[0], &self.spec.inferred()[1]]
    }
}
