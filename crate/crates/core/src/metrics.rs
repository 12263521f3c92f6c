//! Fidelity and stability metrics over a set of explained test examples.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::explain::Attribution;
use crate::scalar::{sgn, Scalar};

pub use crate::stats::{paired_t_test, TTest};

/// Test examples with their explanations, black-box values and exemplar
/// neighborhoods.
#[derive(Clone, Debug)]
pub struct ExplainedSet<F> {
    pub points: Array2<F>,
    pub attributions: Vec<Attribution<F>>,
    /// Black-box value `y_b(x)` at each point.
    pub black_box: Array1<F>,
    pub neighbors: Vec<Vec<usize>>,
    pub task: Task,
}

impl<F: Scalar> ExplainedSet<F> {
    /// Neighborhoods are the `exemplar_k` nearest other points.
    pub fn new(points: Array2<F>, attributions: Vec<Attribution<F>>, black_box: Array1<F>, exemplar_k: usize, task: Task) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if attributions.len() != n || black_box.len() != n {
            return Err(Error::invalid("one attribution and one black-box value per point are required"));
        }
        if attributions.iter().any(|a| a.dim() != points.ncols()) {
            return Err(Error::invalid("attribution length differs from point dimension"));
        }
        let neighbors = exemplar_neighbors(points.view(), exemplar_k)?;
        Ok(ExplainedSet { points, attributions, black_box, neighbors, task })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, F> {
        self.points.row(i)
    }
}

/// Indices of the `k` nearest other rows by Euclidean distance, ties to the
/// lower index.
pub fn exemplar_neighbors<F: Scalar>(points: ArrayView2<'_, F>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("exemplar_k must be in 1..{n}, got {k}")));
    }
    Ok((0..n)
        .map(|i| {
            let mut others: Vec<(F, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let diff = &points.row(i) - &points.row(j);
                    (diff.dot(&diff), j)
                })
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect())
}

/// Per-example absolute error of each explanation at its own point.
pub fn infd_per_example<F: Scalar>(es: &ExplainedSet<F>) -> Vec<F> {
    (0..es.len()).map(|i| (es.black_box[i] - es.attributions[i].predict(es.point(i))).abs()).collect()
}

pub fn infd<F: Scalar>(es: &ExplainedSet<F>) -> F {
    mean(&infd_per_example(es))
}

/// Per-example mean absolute error of the neighbors' explanations at the
/// example's point.
pub fn gi_per_example<F: Scalar>(es: &ExplainedSet<F>) -> Vec<F> {
    (0..es.len())
        .map(|i| {
            let errs: Vec<F> = es.neighbors[i].iter().map(|&j| (es.black_box[i] - es.attributions[j].predict(es.point(i))).abs()).collect();
            mean(&errs)
        })
        .collect()
}

pub fn gi<F: Scalar>(es: &ExplainedSet<F>) -> F {
    mean(&gi_per_example(es))
}

/// Per-example mean ℓ1 distance to the neighbors' coefficients.
pub fn ci_per_example<F: Scalar>(es: &ExplainedSet<F>) -> Vec<F> {
    (0..es.len())
        .map(|i| {
            let own = &es.attributions[i].coefficients;
            let dists: Vec<F> = es.neighbors[i]
                .iter()
                .map(|&j| own.iter().zip(es.attributions[j].coefficients.iter()).map(|(a, b)| (*a - *b).abs()).sum())
                .collect();
            mean(&dists)
        })
        .collect()
}

pub fn ci<F: Scalar>(es: &ExplainedSet<F>) -> F {
    mean(&ci_per_example(es))
}

/// Class-attribution consistency: per class, correlation between the mean
/// attribution and the mean input; classes where it is undefined are
/// skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacResult<F> {
    /// Mean over the classes that could be scored; `None` when none could.
    pub value: Option<F>,
    pub per_class: Vec<(usize, F)>,
    pub skipped: Vec<usize>,
}

pub fn cac<F: Scalar>(es: &ExplainedSet<F>, labels: &[usize]) -> Result<CacResult<F>> {
    if es.task != Task::Classification {
        return Err(Error::invalid("class-attribution consistency needs a classification task"));
    }
    if labels.len() != es.len() {
        return Err(Error::invalid("one label per explained example is required"));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let d = es.points.ncols();
    let mut per_class = Vec::new();
    let mut skipped = Vec::new();
    for y in 0..n_classes {
        let members: Vec<usize> = (0..es.len()).filter(|&i| labels[i] == y).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            log::warn!("class {y} has a single example; skipped");
            skipped.push(y);
            continue;
        }
        let m = F::of_usize(members.len());
        let mu_x = members.iter().fold(Array1::zeros(d), |acc, &i| acc + &es.point(i)) / m;
        let mu_e = members.iter().fold(Array1::zeros(d), |acc, &i| acc + &es.attributions[i].coefficients) / m;
        match pearson(mu_e.view(), mu_x.view()).map_err(|_| Error::DegenerateClass(y)) {
            Ok(r) => per_class.push((y, r)),
            Err(e) => {
                log::warn!("{e}; skipped");
                skipped.push(y);
            }
        }
    }
    let value = if per_class.is_empty() { None } else { Some(per_class.iter().map(|(_, r)| *r).sum::<F>() / F::of_usize(per_class.len())) };
    Ok(CacResult { value, per_class, skipped })
}

/// Pearson correlation; constant inputs are `DegenerateVariance`.
pub fn pearson<F: Scalar>(a: ArrayView1<'_, F>, b: ArrayView1<'_, F>) -> Result<F> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("pearson inputs must be nonempty and equal length"));
    }
    let n = F::of_usize(a.len());
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (F::zero(), F::zero(), F::zero());
    for (x, y) in a.iter().zip(b.iter()) {
        let (u, v) = (*x - ma, *y - mb);
        sab += u * v;
        saa += u * u;
        sbb += v * v;
    }
    if saa <= F::zero() || sbb <= F::zero() {
        return Err(Error::DegenerateVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).max(-F::one()).min(F::one()))
}

/// Unidirectionality of `m` attribution vectors: mean over features of
/// `|Σ sgn| / m`.
pub fn upsilon<F: Scalar>(attribs: &[ArrayView1<'_, F>]) -> Result<F> {
    let m = attribs.len();
    let d = attribs.first().map_or(0, |a| a.len());
    if m == 0 || d == 0 {
        return Err(Error::invalid("upsilon needs at least one nonempty attribution"));
    }
    if attribs.iter().any(|a| a.len() != d) {
        return Err(Error::invalid("attributions differ in length"));
    }
    let total: i64 = (0..d).map(|j| attribs.iter().map(|a| sgn(a[j])).sum::<i64>().abs()).sum();
    Ok(F::of_usize(total as usize) / F::of_usize(m * d))
}

/// Per example, Υ over its own attribution and those of its exemplar
/// neighbors.
pub fn upsilon_neighbors_per_example<F: Scalar>(es: &ExplainedSet<F>) -> Vec<F> {
    (0..es.len())
        .map(|i| {
            let mut views = vec![es.attributions[i].coefficients.view()];
            views.extend(es.neighbors[i].iter().map(|&j| es.attributions[j].coefficients.view()));
            upsilon(&views).expect("validated dimensions")
        })
        .collect()
}

/// Per example, Υ over attributions from repeatedly resampled neighborhoods.
pub fn upsilon_resampled_per_example<F: Scalar>(runs: &[Vec<Attribution<F>>]) -> Result<Vec<F>> {
    runs.iter()
        .map(|rs| {
            let views: Vec<_> = rs.iter().map(|a| a.coefficients.view()).collect();
            upsilon(&views)
        })
        .collect()
}

/// Every metric for one explained set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<F> {
    pub infd: F,
    pub gi: F,
    pub ci: F,
    pub cac: Option<F>,
    pub upsilon: F,
    pub per_example: PerExample<F>,
    pub cac_detail: Option<CacResult<F>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerExample<F> {
    pub infd: Vec<F>,
    pub gi: Vec<F>,
    pub ci: Vec<F>,
    pub upsilon: Vec<F>,
}

/// All metrics. `labels` is required for CAC and ignored for regression.
pub fn evaluate<F: Scalar>(es: &ExplainedSet<F>, labels: Option<&[usize]>) -> Result<MetricsReport<F>> {
    let per_example = PerExample {
        infd: infd_per_example(es),
        gi: gi_per_example(es),
        ci: ci_per_example(es),
        upsilon: upsilon_neighbors_per_example(es),
    };
    let cac_detail = match (es.task, labels) {
        (Task::Classification, Some(l)) => Some(cac(es, l)?),
        _ => None,
    };
    Ok(MetricsReport {
        infd: mean(&per_example.infd),
        gi: mean(&per_example.gi),
        ci: mean(&per_example.ci),
        cac: cac_detail.as_ref().and_then(|c| c.value),
        upsilon: mean(&per_example.upsilon),
        per_example,
        cac_detail,
    })
}

fn mean<F: Scalar>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::zero();
    }
    xs.iter().copied().sum::<F>() / F::of_usize(xs.len())
}
