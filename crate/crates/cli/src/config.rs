//! Versioned JSON run configuration. Command-line flags are applied on top
//! of the file, then everything is validated before any model query.

use std::path::{Path, PathBuf};

use linex_core::bench::{BenchConfig, SweepAxis, SweepConfig};
use linex_core::data::Task;
use linex_core::explain::ExplainConfig;
use linex_core::oracle_check::OracleCheckConfig;
use linex_core::{Method, RngSeed};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub dataset: Option<DatasetSpec>,
    pub model: Option<ModelSpec>,
    /// Probability channel for classifiers; `null` explains the predicted
    /// class of each example.
    pub class: Option<usize>,
    pub explain: ExplainConfig,
    pub methods: Vec<Method>,
    pub taus: Vec<f64>,
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub axis: SweepAxis,
    pub exemplar_k: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub oracle: OracleCheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchConfig::default();
        let sweep = SweepConfig::default();
        RunConfig {
            version: SCHEMA_VERSION,
            dataset: None,
            model: None,
            class: None,
            explain: ExplainConfig::default(),
            methods: bench.methods,
            taus: bench.taus,
            ns: sweep.ns,
            ks: sweep.ks,
            axis: sweep.axis,
            exemplar_k: bench.exemplar_k,
            seed: 0,
            workers: None,
            out: PathBuf::from("out"),
            oracle: OracleCheckConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub task: Task,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    /// Z-score features with training statistics; explanations are then in
    /// standardized units.
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_split_seed() -> u64 {
    42
}

fn default_true() -> bool {
    true
}

fn default_timeout() -> f64 {
    30.0
}

fn default_max_batch() -> usize {
    1024
}

fn default_magnitude() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Random forest trained on the training split.
    Forest {
        #[serde(default = "default_trees")]
        trees: usize,
        #[serde(default = "default_depth")]
        max_depth: usize,
        #[serde(default = "default_forest_seed")]
        seed: u64,
    },
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    PiecewiseSign {
        axis: usize,
        #[serde(default = "default_magnitude")]
        magnitude: f64,
    },
    /// External process speaking NDJSON on stdin/stdout, queried in raw
    /// feature units.
    Subprocess {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_max_batch")]
        max_batch: usize,
    },
}

fn default_trees() -> usize {
    100
}

fn default_depth() -> usize {
    8
}

fn default_forest_seed() -> u64 {
    1
}

impl ModelSpec {
    /// Task of the model, when known without querying it.
    pub fn task(&self) -> Option<Task> {
        match self {
            ModelSpec::Forest { .. } => Some(Task::Classification),
            ModelSpec::Linear { .. } | ModelSpec::PiecewiseSign { .. } => Some(Task::Regression),
            ModelSpec::Subprocess { .. } => None,
        }
    }

    pub fn validate(&self, d: Option<usize>) -> Result<(), Failure> {
        match self {
            ModelSpec::Forest { trees, max_depth, .. } => {
                if *trees == 0 || *max_depth == 0 {
                    return Err(Failure::config("forest needs at least one tree and depth ≥ 1"));
                }
            }
            ModelSpec::Linear { weights, intercept } => {
                if weights.is_empty() || !weights.iter().chain([intercept]).all(|v| v.is_finite()) {
                    return Err(Failure::config("linear model needs finite, nonempty weights"));
                }
                if let Some(d) = d.filter(|d| *d != weights.len()) {
                    return Err(Failure::config(format!("linear model has {} weights for {d} features", weights.len())));
                }
            }
            ModelSpec::PiecewiseSign { axis, magnitude } => {
                if !magnitude.is_finite() {
                    return Err(Failure::config("piecewise_sign magnitude must be finite"));
                }
                if let Some(d) = d.filter(|d| axis >= d) {
                    return Err(Failure::config(format!("piecewise_sign axis {axis} out of range for {d} features")));
                }
            }
            ModelSpec::Subprocess { command, timeout_secs, max_batch } => {
                if command.is_empty() {
                    return Err(Failure::config("subprocess command is empty"));
                }
                if !(*timeout_secs > 0.0 && timeout_secs.is_finite()) || *max_batch == 0 {
                    return Err(Failure::config("subprocess timeout and max_batch must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub axis: Option<SweepAxis>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(Failure::config(format!("unsupported config version {v} (expected {SCHEMA_VERSION})"))),
            None => return Err(Failure::config("config must carry an integer \"version\" field")),
        }
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        // Relative dataset paths are taken from the config file's directory.
        if let (Some(ds), Some(dir)) = (cfg.dataset.as_mut(), path.parent()) {
            if ds.path.is_relative() {
                ds.path = dir.join(&ds.path);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.oracle.seed = RngSeed(seed);
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(methods) = &o.methods {
            self.methods = methods.clone();
            self.explain.method = methods[0];
        }
        if let Some(axis) = o.axis {
            self.axis = axis;
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            methods: self.methods.clone(),
            taus: self.taus.clone(),
            explain: self.explain.clone(),
            exemplar_k: self.exemplar_k,
            seed: RngSeed(self.seed),
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig { axis: self.axis, ns: self.ns.clone(), ks: self.ks.clone(), bench: self.bench() }
    }

    /// Checks that do not need the dataset.
    pub fn validate_static(&self) -> Result<(), Failure> {
        if self.workers == Some(0) {
            return Err(Failure::config("workers must be at least 1"));
        }
        let dataset = self.dataset.as_ref().ok_or_else(|| Failure::config("config has no \"dataset\""))?;
        if !(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0) {
            return Err(Failure::config("test_fraction must lie in (0, 1)"));
        }
        let model = self.model.as_ref().ok_or_else(|| Failure::config("config has no \"model\""))?;
        model.validate(None)?;
        if let Some(task) = model.task().filter(|t| *t != dataset.task) {
            return Err(Failure::config(format!("model task {task:?} does not match dataset task {:?}", dataset.task)));
        }
        if self.class.is_some() && dataset.task != Task::Classification {
            return Err(Failure::config("class is only meaningful for classification"));
        }
        self.explain.validate().map_err(Failure::from_core)?;
        self.sweep_checks()?;
        self.bench().validate().map_err(Failure::from_core)
    }

    fn sweep_checks(&self) -> Result<(), Failure> {
        if self.ns.is_empty() || self.ks.is_empty() {
            return Err(Failure::config("ns and ks must be nonempty"));
        }
        for &n in &self.ns {
            ExplainConfig { n, ..self.explain.clone() }.validate().map_err(Failure::from_core)?;
        }
        for &k in &self.ks {
            ExplainConfig { k, ..self.explain.clone() }.validate().map_err(Failure::from_core)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"version":1,"sed":3}"#).is_err());
    }

    #[test]
    fn model_specs_parse() {
        let m: ModelSpec = serde_json::from_str(r#"{"kind":"piecewise_sign","axis":1}"#).unwrap();
        assert_eq!(m, ModelSpec::PiecewiseSign { axis: 1, magnitude: 1.0 });
        let m: ModelSpec = serde_json::from_str(r#"{"kind":"subprocess","command":["python3","m.py"]}"#).unwrap();
        assert!(matches!(m, ModelSpec::Subprocess { timeout_secs, .. } if timeout_secs == 30.0));
        assert!(ModelSpec::Linear { weights: vec![1.0], intercept: 0.0 }.validate(Some(2)).is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides { seed: Some(9), methods: Some(vec![Method::Lime]), ..Overrides::default() });
        assert_eq!((cfg.seed, cfg.oracle.seed, cfg.explain.method), (9, RngSeed(9), Method::Lime));
        assert_eq!(cfg.methods, vec![Method::Lime]);
    }
}
