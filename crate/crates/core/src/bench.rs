//! Benchmark and ablation drivers: explain a test set under several methods
//! and kernel widths, score every run, and compare methods pairwise.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::explain::{explain_example, ExplainConfig, Explanation, Method, ModelAccess};
use crate::metrics::{evaluate, ExplainedSet, MetricsReport};
use crate::rng::RngSeed;
use crate::stats::{mean, paired_t_test, sem};

/// Standardized train and test sets with the model as seen in standardized
/// units.
#[derive(Clone)]
pub struct Experiment {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub model: ModelAccess<f64>,
}

/// Explains every test example. Example `i` uses `seed.derive(i)`, so
/// methods sharing a seed see identical base neighborhoods. Results come
/// back in input order.
pub fn explain_all(exp: &Experiment, cfg: &ExplainConfig, seed: RngSeed, pool: Option<&rayon::ThreadPool>) -> Result<Vec<Explanation<f64>>> {
    cfg.validate()?;
    let one = |i: usize| explain_example(&exp.test.example(i), &exp.model, Some(&exp.train), cfg, seed.derive(i as u64));
    let n = exp.test.len();
    match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(one).collect()),
        None => (0..n).map(one).collect(),
    }
}

/// Black-box value at each test point, on the channel explained there.
pub fn black_box_values(exp: &Experiment) -> Result<Vec<f64>> {
    (0..exp.test.len())
        .map(|i| {
            let x = exp.test.row(i);
            exp.model.black_box_for(x)?.predict_one(x)
        })
        .collect()
}

/// Scores one set of explanations of the test set.
pub fn score(exp: &Experiment, explanations: &[Explanation<f64>], bb_values: &[f64], exemplar_k: usize) -> Result<MetricsReport<f64>> {
    let attributions = explanations.iter().map(|e| e.attribution.clone()).collect();
    let es = ExplainedSet::new(exp.test.features().clone(), attributions, bb_values.iter().copied().collect(), exemplar_k, exp.model.task())?;
    let labels = exp.test.class_labels();
    evaluate(&es, if exp.model.task() == Task::Classification { labels.as_deref() } else { None })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Infd,
    Gi,
    Ci,
    Cac,
    Upsilon,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Infd, Metric::Gi, Metric::Ci, Metric::Cac, Metric::Upsilon];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Infd => "infd",
            Metric::Gi => "gi",
            Metric::Ci => "ci",
            Metric::Cac => "cac",
            Metric::Upsilon => "upsilon",
        }
    }

    pub fn value(self, r: &MetricsReport<f64>) -> Option<f64> {
        match self {
            Metric::Infd => Some(r.infd),
            Metric::Gi => Some(r.gi),
            Metric::Ci => Some(r.ci),
            Metric::Cac => r.cac,
            Metric::Upsilon => Some(r.upsilon),
        }
    }

    /// Keyed units the metric averages over: examples, or classes for CAC.
    fn units(self, r: &MetricsReport<f64>) -> Vec<(usize, f64)> {
        let indexed = |v: &[f64]| v.iter().copied().enumerate().collect();
        match self {
            Metric::Infd => indexed(&r.per_example.infd),
            Metric::Gi => indexed(&r.per_example.gi),
            Metric::Ci => indexed(&r.per_example.ci),
            Metric::Upsilon => indexed(&r.per_example.upsilon),
            Metric::Cac => r.cac_detail.as_ref().map_or_else(Vec::new, |c| c.per_class.clone()),
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Cac | Metric::Upsilon)
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub taus: Vec<f64>,
    pub explain: ExplainConfig,
    pub exemplar_k: usize,
    pub seed: RngSeed,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![Method::Linex, Method::Lime, Method::Slime],
            taus: vec![0.05, 0.1, 0.25, 0.5, 0.75],
            explain: ExplainConfig::default(),
            exemplar_k: 5,
            seed: RngSeed(0),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.taus.is_empty() {
            return Err(Error::invalid("at least one kernel width is required"));
        }
        if self.exemplar_k == 0 {
            return Err(Error::invalid("exemplar_k must be at least 1"));
        }
        for &tau in &self.taus {
            ExplainConfig { tau, ..self.explain.clone() }.validate()?;
        }
        Ok(())
    }
}

/// One method at one kernel width.
#[derive(Clone, Debug)]
pub struct Run {
    pub method: Method,
    pub tau: f64,
    pub explanations: Vec<Explanation<f64>>,
    pub metrics: MetricsReport<f64>,
}

impl Run {
    pub fn non_converged(&self) -> usize {
        self.explanations.iter().filter(|e| !e.converged).count()
    }
}

/// Mean ± standard error over kernel widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub metric: Metric,
    pub mean: f64,
    pub sem: f64,
}

/// Paired comparison of a LINEX run against a baseline, pairing per
/// example (per class for CAC) across all kernel widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: Method,
    pub baseline: Method,
    pub metric: Metric,
    pub pairs: usize,
    pub mean_difference: f64,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub runs: Vec<Run>,
    pub summary: Vec<Summary>,
    pub comparisons: Vec<Comparison>,
}

impl BenchReport {
    pub fn summary_of(&self, method: Method, metric: Metric) -> Option<&Summary> {
        self.summary.iter().find(|s| s.method == method && s.metric == metric)
    }

    pub fn comparison(&self, method: Method, baseline: Method, metric: Metric) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.method == method && c.baseline == baseline && c.metric == metric)
    }
}

pub fn benchmark(exp: &Experiment, cfg: &BenchConfig, pool: Option<&rayon::ThreadPool>) -> Result<BenchReport> {
    cfg.validate()?;
    let bb_values = black_box_values(exp)?;
    let mut runs = Vec::new();
    for &method in &cfg.methods {
        for &tau in &cfg.taus {
            let ecfg = ExplainConfig { method, tau, ..cfg.explain.clone() };
            let explanations = explain_all(exp, &ecfg, cfg.seed, pool)?;
            let metrics = score(exp, &explanations, &bb_values, cfg.exemplar_k)?;
            runs.push(Run { method, tau, explanations, metrics });
        }
    }
    let summary = summarize(&runs, &cfg.methods);
    let comparisons = compare(&runs, &cfg.methods, &cfg.taus);
    Ok(BenchReport { runs, summary, comparisons })
}

fn summarize(runs: &[Run], methods: &[Method]) -> Vec<Summary> {
    let mut out = Vec::new();
    for &method in methods {
        for metric in Metric::ALL {
            let vals: Vec<f64> = runs.iter().filter(|r| r.method == method).filter_map(|r| metric.value(&r.metrics)).collect();
            if !vals.is_empty() {
                out.push(Summary { method, metric, mean: mean(&vals), sem: sem(&vals) });
            }
        }
    }
    out
}

fn compare(runs: &[Run], methods: &[Method], taus: &[f64]) -> Vec<Comparison> {
    let mut out = Vec::new();
    if !methods.contains(&Method::Linex) {
        return out;
    }
    let find = |m: Method, tau: f64| runs.iter().find(|r| r.method == m && r.tau == tau);
    for &baseline in methods.iter().filter(|m| **m != Method::Linex) {
        for metric in Metric::ALL {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for &tau in taus {
                let (Some(x), Some(y)) = (find(Method::Linex, tau), find(baseline, tau)) else { continue };
                let ys: BTreeMap<usize, f64> = metric.units(&y.metrics).into_iter().collect();
                for (unit, v) in metric.units(&x.metrics) {
                    if let Some(w) = ys.get(&unit) {
                        a.push(v);
                        b.push(*w);
                    }
                }
            }
            if a.is_empty() {
                continue;
            }
            let test = paired_t_test(&a, &b).ok();
            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            out.push(Comparison {
                method: Method::Linex,
                baseline,
                metric,
                pairs: a.len(),
                mean_difference: mean(&diffs),
                t: test.map(|t| t.t),
                p_value: test.map(|t| t.p_value),
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    N,
    K,
    Tau,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(SweepAxis::N),
            "k" => Ok(SweepAxis::K),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::invalid(format!("unknown sweep axis {other:?}"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::N => "n",
            SweepAxis::K => "k",
            SweepAxis::Tau => "tau",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub bench: BenchConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { axis: SweepAxis::K, ns: vec![10, 20, 30, 40, 50], ks: vec![2, 3, 4, 5], bench: BenchConfig::default() }
    }
}

/// One long-form sweep row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub axis: SweepAxis,
    pub value: f64,
    pub metric: Metric,
    pub mean: f64,
    pub sem: f64,
}

/// Runs the full `n × k × τ` grid and, per value of the ablated axis,
/// averages each metric over the other two.
pub fn sweep(exp: &Experiment, cfg: &SweepConfig, pool: Option<&rayon::ThreadPool>) -> Result<Vec<SweepRow>> {
    cfg.bench.validate()?;
    if cfg.ns.is_empty() || cfg.ks.is_empty() {
        return Err(Error::invalid("sweep grids must be nonempty"));
    }
    let bb_values = black_box_values(exp)?;
    // (method, axis value as bits, metric) -> values over the other axes.
    let mut cells: BTreeMap<(Method, u64, Metric), Vec<f64>> = BTreeMap::new();
    let mut axis_order: Vec<f64> = Vec::new();
    for &n in &cfg.ns {
        for &k in &cfg.ks {
            for &tau in &cfg.bench.taus {
                let value = match cfg.axis {
                    SweepAxis::N => n as f64,
                    SweepAxis::K => k as f64,
                    SweepAxis::Tau => tau,
                };
                if !axis_order.contains(&value) {
                    axis_order.push(value);
                }
                for &method in &cfg.bench.methods {
                    let ecfg = ExplainConfig { method, tau, n, k, ..cfg.bench.explain.clone() };
                    let explanations = explain_all(exp, &ecfg, cfg.bench.seed, pool)?;
                    let metrics = score(exp, &explanations, &bb_values, cfg.bench.exemplar_k)?;
                    for metric in Metric::ALL {
                        if let Some(v) = metric.value(&metrics) {
                            cells.entry((method, value.to_bits(), metric)).or_default().push(v);
                        }
                    }
                }
            }
        }
    }
    let mut rows = Vec::new();
    for &method in &cfg.bench.methods {
        for metric in Metric::ALL {
            for &value in &axis_order {
                if let Some(vals) = cells.get(&(method, value.to_bits(), metric)) {
                    rows.push(SweepRow { method, axis: cfg.axis, value, metric, mean: mean(vals), sem: sem(vals) });
                }
            }
        }
    }
    Ok(rows)
}
