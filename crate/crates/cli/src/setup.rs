//! Dataset loading and model construction.

use std::sync::Arc;
use std::time::Duration;

use linex_core::bench::Experiment;
use linex_core::blackbox::{
    builtin_forest, builtin_linear, builtin_piecewise_sign, BlackBox, Classifier, SubprocessBlackBox, SubprocessOptions, Unstandardize,
};
use linex_core::data::{load_csv, train_test_split, Standardizer, Task};
use linex_core::{Dataset, ModelAccess, RngSeed};
use ndarray::Array1;

use crate::config::{DatasetSpec, ModelSpec, RunConfig};
use crate::failure::Failure;

pub struct Setup {
    pub experiment: Experiment,
    /// Test accuracy of a built-in forest.
    pub accuracy: Option<f64>,
}

struct Splits {
    train: Dataset,
    test: Dataset,
    scaler: Option<Standardizer<f64>>,
}

fn load(spec: &DatasetSpec) -> Result<Splits, Failure> {
    if !spec.path.exists() {
        return Err(Failure::io(format!("dataset {} does not exist", spec.path.display())));
    }
    let ds: Dataset = load_csv(&spec.path, spec.task, spec.label_column.as_deref())?;
    let (train, test) = train_test_split(&ds, spec.test_fraction, RngSeed(spec.split_seed))?;
    if !spec.standardize {
        return Ok(Splits { train, test, scaler: None });
    }
    let scaler = Standardizer::fit(&train)?;
    Ok(Splits { train: scaler.transform(&train)?, test: scaler.transform(&test)?, scaler: Some(scaler) })
}

fn in_explained_space(bb: impl BlackBox<f64> + 'static, scaler: &Option<Standardizer<f64>>) -> Arc<dyn BlackBox<f64>> {
    match scaler {
        Some(s) => Arc::new(Unstandardize::new(bb, s.clone())),
        None => Arc::new(bb),
    }
}

/// Loads data and builds the model. Everything that can be checked without
/// querying the model is checked before the model exists.
pub fn prepare(cfg: &RunConfig) -> Result<Setup, Failure> {
    cfg.validate_static()?;
    let spec = cfg.dataset.as_ref().expect("validated");
    let model = cfg.model.as_ref().expect("validated");
    let Splits { train, test, scaler } = load(spec)?;
    let d = train.dim();
    model.validate(Some(d))?;
    if cfg.exemplar_k >= test.len() {
        return Err(Failure::config(format!("exemplar_k = {} needs more than {} test examples", cfg.exemplar_k, test.len())));
    }
    if spec.task == Task::Classification {
        let classes = train.n_classes().max(test.n_classes());
        if let Some(c) = cfg.class.filter(|c| *c >= classes.max(1)) {
            return Err(Failure::config(format!("class {c} out of range for {classes} classes")));
        }
    }

    let (model, accuracy) = match model {
        ModelSpec::Forest { trees, max_depth, seed } => {
            if !train.is_labeled() {
                return Err(Failure::config("a forest needs a labeled dataset (set label_column)"));
            }
            let forest = builtin_forest(&train, *trees, *max_depth, RngSeed(*seed))?;
            let accuracy = if test.is_labeled() { Some(forest.accuracy(&test)?) } else { None };
            let forest: Arc<dyn Classifier<f64>> = Arc::new(forest);
            (ModelAccess::Classifier { model: forest, class: cfg.class }, accuracy)
        }
        ModelSpec::Linear { weights, intercept } => {
            let bb = builtin_linear(Array1::from(weights.clone()), *intercept)?;
            (ModelAccess::Fixed(in_explained_space(bb, &scaler)), None)
        }
        ModelSpec::PiecewiseSign { axis, magnitude } => {
            let bb = builtin_piecewise_sign(d, *axis, *magnitude)?;
            (ModelAccess::Fixed(in_explained_space(bb, &scaler)), None)
        }
        ModelSpec::Subprocess { command, timeout_secs, max_batch } => {
            if cfg.class.is_some() {
                return Err(Failure::config("class cannot be chosen for a subprocess model; it returns one output"));
            }
            let opts = SubprocessOptions { timeout: Duration::from_secs_f64(*timeout_secs), max_batch: *max_batch };
            let bb = SubprocessBlackBox::spawn(command, opts)?;
            let (bd, bt) = (BlackBox::<f64>::dimension(&bb), BlackBox::<f64>::task(&bb));
            if bd != d || bt != spec.task {
                return Err(Failure::config(format!(
                    "subprocess announced d = {bd}, {bt:?}; dataset has d = {d}, {:?}",
                    spec.task
                )));
            }
            (ModelAccess::Fixed(in_explained_space(bb, &scaler)), None)
        }
    };
    Ok(Setup { experiment: Experiment { train, test, model }, accuracy })
}
