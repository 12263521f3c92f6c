//! End-to-end explanation of a single example: neighborhood, environments,
//! then LINEX, LIME or S-LIME on top.

use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::baselines::{lime_explain, slime_explain, LimeConfig};
use crate::blackbox::{with_cache, BlackBox, Classifier, ProbaChannel};
use crate::data::{Dataset, Example, Task};
use crate::error::{Error, Result};
use crate::linalg::WeightedMoments;
use crate::neighborhood::{
    bootstrap_environments, exemplar_selection, kde_generation, random_perturbation, EnvironmentSet, KernelSpec, Neighborhood,
};
use crate::rng::RngSeed;
use crate::scalar::Scalar;
use crate::solver::{default_gamma, play_game, sparsify, GameConfig};

/// A local linear explanation.
#[derive(Clone, Debug, PartialEq)]
pub struct Attribution<F> {
    pub coefficients: Array1<F>,
    pub intercept: F,
    /// Indices with a nonzero coefficient, ascending.
    pub support: Vec<usize>,
    /// Black-box evaluations spent building the explanation.
    pub query_count: u64,
}

impl<F: Scalar> Attribution<F> {
    pub fn new(coefficients: Array1<F>, intercept: F) -> Self {
        let support = (0..coefficients.len()).filter(|&j| coefficients[j] != F::zero()).collect();
        Attribution { coefficients, intercept, support, query_count: 0 }
    }

    /// The local model evaluated at `x`.
    pub fn predict(&self, x: ArrayView1<'_, F>) -> F {
        self.coefficients.dot(&x) + self.intercept
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Linex,
    Lime,
    Slime,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Linex => "linex",
            Method::Lime => "lime",
            Method::Slime => "slime",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linex" => Ok(Method::Linex),
            "lime" => Ok(Method::Lime),
            "slime" | "s-lime" => Ok(Method::Slime),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// How the base neighborhood is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sampler {
    /// Gaussian noise around the example; `sigma` defaults to one per
    /// feature (the training std in standardized units).
    Random {
        #[serde(default)]
        sigma: Option<Vec<f64>>,
    },
    /// Gaussian KDE over the training set, localized at the example.
    Kde {
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
    },
    /// Nearest training examples.
    Exemplar,
}

fn default_bandwidth() -> f64 {
    0.3
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::Random { sigma: None }
    }
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Random { .. } => "random",
            Sampler::Kde { .. } => "kde",
            Sampler::Exemplar => "exemplar",
        }
    }
}

/// Every knob of a single explanation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub method: Method,
    pub sampler: Sampler,
    /// Base neighborhood size.
    pub n: usize,
    /// Number of environments.
    pub k: usize,
    pub tau: f64,
    /// Sparsity budget.
    pub budget: usize,
    pub ridge_alt: Option<f64>,
    /// Overrides for the ℓ∞ and ℓ1 bounds of the game.
    pub gamma: Option<f64>,
    pub t: Option<f64>,
    pub epsilon: f64,
    pub max_rounds: usize,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            method: Method::Linex,
            sampler: Sampler::default(),
            n: 10,
            k: 2,
            tau: 0.25,
            budget: 5,
            ridge_alt: None,
            gamma: None,
            t: None,
            epsilon: 1e-6,
            max_rounds: 200,
            inner_max_iters: 500,
            inner_tol: 1e-8,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        KernelSpec::new(self.tau)?;
        if self.n < 2 {
            return Err(Error::invalid("neighborhood size n must be at least 2"));
        }
        if self.k < 2 {
            return Err(Error::invalid("k must be at least 2"));
        }
        if self.budget == 0 {
            return Err(Error::invalid("sparsity budget must be at least 1"));
        }
        for (name, v) in [("gamma", self.gamma), ("t", self.t), ("ridge_alt", self.ridge_alt)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("{name} must be positive")));
                }
            }
        }
        if !(self.epsilon > 0.0) || !(self.inner_tol > 0.0) || self.inner_max_iters == 0 {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        if let Sampler::Random { sigma: Some(s) } = &self.sampler {
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::invalid("sigma entries must be positive"));
            }
        }
        if let Sampler::Kde { bandwidth } = self.sampler {
            if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
                return Err(Error::invalid("bandwidth must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec { tau: self.tau }
    }

    pub fn lime_config<F: Scalar>(&self) -> LimeConfig<F> {
        LimeConfig { budget: self.budget, kernel: self.kernel(), ridge_alt: self.ridge_alt.map(F::lit) }
    }
}

/// An explanation plus how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation<F> {
    pub attribution: Attribution<F>,
    pub method: Method,
    pub converged: bool,
    pub rounds: usize,
    pub gamma: Option<F>,
    pub class_of_interest: Option<usize>,
}

/// The model as the explainer reaches it.
#[derive(Clone)]
pub enum ModelAccess<F: Scalar> {
    /// A black-box with a fixed output channel.
    Fixed(Arc<dyn BlackBox<F>>),
    /// A classifier; `class = None` explains the class predicted at each
    /// example.
    Classifier { model: Arc<dyn Classifier<F>>, class: Option<usize> },
}

impl<F: Scalar> ModelAccess<F> {
    pub fn dimension(&self) -> usize {
        match self {
            ModelAccess::Fixed(bb) => bb.dimension(),
            ModelAccess::Classifier { model, .. } => model.dimension(),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            ModelAccess::Fixed(bb) => bb.task(),
            ModelAccess::Classifier { .. } => Task::Classification,
        }
    }

    /// The scalar black-box explained at `anchor`.
    pub fn black_box_for(&self, anchor: ArrayView1<'_, F>) -> Result<Arc<dyn BlackBox<F>>> {
        match self {
            ModelAccess::Fixed(bb) => Ok(Arc::clone(bb)),
            ModelAccess::Classifier { model, class } => {
                let class = match class {
                    Some(c) => *c,
                    None => model.predict_class(anchor)?,
                };
                Ok(Arc::new(ProbaChannel::new(Arc::clone(model), class)?))
            }
        }
    }
}

/// Builds the base neighborhood for `anchor` with the configured sampler.
pub fn build_neighborhood<F: Scalar, B: BlackBox<F> + ?Sized>(
    anchor: &Example<F>,
    bb: &B,
    train: Option<&Dataset<F>>,
    cfg: &ExplainConfig,
    seed: RngSeed,
) -> Result<Neighborhood<F>> {
    let kernel = cfg.kernel();
    let d = anchor.dim();
    match &cfg.sampler {
        Sampler::Random { sigma } => {
            let sigma: Array1<F> = match sigma {
                Some(s) if s.len() == d => s.iter().map(|&v| F::lit(v)).collect(),
                Some(s) => return Err(Error::invalid(format!("sigma has {} entries for {d} features", s.len()))),
                None => Array1::ones(d),
            };
            random_perturbation(anchor, cfg.n, sigma.view(), bb, &kernel, seed)
        }
        Sampler::Kde { bandwidth } => {
            let train = train.ok_or_else(|| Error::invalid("kde sampler needs training data"))?;
            kde_generation(train, anchor, cfg.n, F::lit(*bandwidth), bb, &kernel, seed)
        }
        Sampler::Exemplar => {
            let train = train.ok_or_else(|| Error::invalid("exemplar sampler needs training data"))?;
            exemplar_selection(train, anchor, cfg.n, bb)
        }
    }
}

/// Runs the configured method on an already-built environment set. No
/// black-box queries happen here.
pub fn explain_environments<F: Scalar>(es: &EnvironmentSet<F>, cfg: &ExplainConfig) -> Result<Explanation<F>> {
    let lime_cfg = cfg.lime_config::<F>();
    let plain = |attribution, method| Explanation { attribution, method, converged: true, rounds: 0, gamma: None, class_of_interest: None };
    match cfg.method {
        Method::Lime => Ok(plain(lime_explain(&es.base, &lime_cfg)?, Method::Lime)),
        Method::Slime => Ok(plain(slime_explain(es, &lime_cfg)?, Method::Slime)),
        Method::Linex => linex(es, cfg),
    }
}

fn linex<F: Scalar>(es: &EnvironmentSet<F>, cfg: &ExplainConfig) -> Result<Explanation<F>> {
    let d = es.dim();
    let support = sparsify(es, cfg.budget, cfg.ridge_alt.map(F::lit))?;
    let base = WeightedMoments::from_neighborhood(&es.base)?;
    if support.is_empty() {
        let coefficients = Array1::zeros(d);
        let intercept = base.intercept(coefficients.view());
        return Ok(Explanation {
            attribution: Attribution::new(coefficients, intercept),
            method: Method::Linex,
            converged: true,
            rounds: 0,
            gamma: None,
            class_of_interest: None,
        });
    }
    let restricted = es.restrict(&support);
    let gamma = match cfg.gamma {
        Some(g) => F::lit(g),
        None => match default_gamma(&restricted, cfg.budget) {
            Ok(g) => g,
            Err(Error::DegenerateGamma) => F::one(),
            Err(e) => return Err(e),
        },
    };
    let t = cfg.t.map(F::lit).unwrap_or_else(|| gamma * F::of_usize(support.len()));
    let game = GameConfig {
        k: cfg.k,
        gamma,
        t,
        epsilon: F::lit(cfg.epsilon),
        max_rounds: cfg.max_rounds,
        inner_max_iters: cfg.inner_max_iters,
        inner_tol: F::lit(cfg.inner_tol),
    };
    let result = play_game(&restricted, &game)?;
    // Players settle only to within ε each, so sums below k·ε are
    // cancellation residue rather than attributions.
    let dust = game.epsilon * F::of_usize(cfg.k);
    let mut coefficients = Array1::zeros(d);
    for (slot, &j) in support.iter().enumerate() {
        let w = result.coefficients[slot];
        coefficients[j] = if w.abs() < dust { F::zero() } else { w };
    }
    let intercept = base.intercept(coefficients.view());
    Ok(Explanation {
        attribution: Attribution::new(coefficients, intercept),
        method: Method::Linex,
        converged: result.state.converged,
        rounds: result.state.rounds_used,
        gamma: Some(gamma),
        class_of_interest: None,
    })
}

/// Neighborhood, bootstrap environments and explanation for one example.
/// `seed` should already be specific to the example.
pub fn explain_example<F: Scalar>(
    anchor: &Example<F>,
    model: &ModelAccess<F>,
    train: Option<&Dataset<F>>,
    cfg: &ExplainConfig,
    seed: RngSeed,
) -> Result<Explanation<F>> {
    cfg.validate()?;
    let bb = model.black_box_for(anchor.features.view())?;
    let cached = with_cache(Arc::clone(&bb));
    let base = build_neighborhood(anchor, &cached, train, cfg, seed.derive(0))?;
    let es = bootstrap_environments(base, anchor.clone(), cfg.k, seed.derive(1))?;
    let mut out = explain_environments(&es, cfg)?;
    out.attribution.query_count = cached.ledger().total_queries();
    out.class_of_interest = bb.class_of_interest();
    Ok(out)
}
