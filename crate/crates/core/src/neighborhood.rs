//! Perturbation neighborhoods around an explained example and their
//! bootstrap split into game environments.
//!
//! The black-box is queried exactly once per base sample. Bootstrap
//! environments copy `(features, target, weight)` triples out of the base, so
//! building an [`EnvironmentSet`] of any size costs `n` queries in total.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blackbox::BlackBox;
use crate::data::{check_finite_row, Dataset, Example};
use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::scalar::Scalar;

/// One perturbed point with its model output and proximity weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample<F> {
    pub features: Array1<F>,
    pub target: F,
    pub weight: F,
}

/// A list of weighted samples stored column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood<F> {
    pub x: Array2<F>,
    pub target: Array1<F>,
    pub weight: Array1<F>,
}

impl<F: Scalar> Neighborhood<F> {
    pub fn new(x: Array2<F>, target: Array1<F>, weight: Array1<F>) -> Result<Self> {
        let n = x.nrows();
        if target.len() != n || weight.len() != n {
            return Err(Error::invalid("neighborhood columns have different lengths"));
        }
        if !target.iter().all(|t| t.is_finite()) {
            return Err(Error::BlackBox("non-finite target in neighborhood".into()));
        }
        if !weight.iter().all(|w| w.is_finite() && *w >= F::zero()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(Neighborhood { x, target, weight })
    }

    pub fn from_samples(samples: &[WeightedSample<F>]) -> Result<Self> {
        let d = samples.first().map(|s| s.features.len()).ok_or_else(|| Error::invalid("no samples"))?;
        let mut x = Array2::zeros((samples.len(), d));
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != d {
                return Err(Error::invalid("samples of different dimension"));
            }
            x.row_mut(i).assign(&s.features);
        }
        let target = samples.iter().map(|s| s.target).collect();
        let weight = samples.iter().map(|s| s.weight).collect();
        Neighborhood::new(x, target, weight)
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn sample(&self, i: usize) -> WeightedSample<F> {
        WeightedSample { features: self.x.row(i).to_owned(), target: self.target[i], weight: self.weight[i] }
    }

    pub fn samples(&self) -> Vec<WeightedSample<F>> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }

    /// Rows at `indices`, repeats allowed.
    pub fn select(&self, indices: &[usize]) -> Neighborhood<F> {
        Neighborhood {
            x: self.x.select(Axis(0), indices),
            target: self.target.select(Axis(0), indices),
            weight: self.weight.select(Axis(0), indices),
        }
    }

    /// Same samples restricted to a subset of feature columns.
    pub fn restrict(&self, features: &[usize]) -> Neighborhood<F> {
        Neighborhood { x: self.x.select(Axis(1), features), target: self.target.clone(), weight: self.weight.clone() }
    }

    pub fn with_weights(&self, weight: Array1<F>) -> Result<Neighborhood<F>> {
        Neighborhood::new(self.x.clone(), self.target.clone(), weight)
    }
}

/// Gaussian proximity kernel of width `tau · sqrt(d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub tau: f64,
}

impl KernelSpec {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("kernel tau must be positive, got {tau}")));
        }
        Ok(KernelSpec { tau })
    }

    pub fn width(&self, d: usize) -> f64 {
        self.tau * (d as f64).sqrt()
    }

    /// `exp(-dist² / width²)`.
    pub fn weight<F: Scalar>(&self, squared_distance: F, d: usize) -> F {
        let w = F::lit(self.width(d));
        (-squared_distance / (w * w)).exp()
    }
}

fn squared_distance<F: Scalar>(a: ArrayView1<'_, F>, b: ArrayView1<'_, F>) -> F {
    a.iter().zip(b.iter()).map(|(&u, &v)| (u - v) * (u - v)).sum()
}

fn query_and_weight<F: Scalar, B: BlackBox<F> + ?Sized>(
    x: Array2<F>,
    anchor: ArrayView1<'_, F>,
    bb: &B,
    kernel: Option<&KernelSpec>,
) -> Result<Neighborhood<F>> {
    let d = anchor.len();
    let target = bb.predict_batch(x.view())?;
    if target.len() != x.nrows() {
        return Err(Error::BlackBox(format!("{} outputs for {} inputs", target.len(), x.nrows())));
    }
    let weight = match kernel {
        Some(k) => x.rows().into_iter().map(|row| k.weight(squared_distance(row, anchor), d)).collect(),
        None => Array1::from_elem(x.nrows(), F::one()),
    };
    Neighborhood::new(x, target, weight)
}

fn check_anchor<F: Scalar, B: BlackBox<F> + ?Sized>(anchor: &Example<F>, bb: &B) -> Result<()> {
    check_finite_row(anchor.features.view())?;
    if anchor.dim() != bb.dimension() {
        return Err(Error::invalid(format!("anchor has {} features, model expects {}", anchor.dim(), bb.dimension())));
    }
    Ok(())
}

/// The anchor itself followed by `n − 1` draws of `anchor + N(0, diag(sigma²))`,
/// kernel-weighted by distance to the anchor.
pub fn random_perturbation<F: Scalar, B: BlackBox<F> + ?Sized>(
    anchor: &Example<F>,
    n: usize,
    sigma: ArrayView1<'_, F>,
    bb: &B,
    kernel: &KernelSpec,
    seed: RngSeed,
) -> Result<Neighborhood<F>> {
    check_anchor(anchor, bb)?;
    let d = anchor.dim();
    if n < 2 {
        return Err(Error::invalid("neighborhood needs at least two samples"));
    }
    if sigma.len() != d || !sigma.iter().all(|s| *s > F::zero() && s.is_finite()) {
        return Err(Error::invalid("sigma must be positive with one entry per feature"));
    }
    let mut rng = seed.rng();
    let x = Array2::from_shape_fn((n, d), |(i, j)| {
        if i == 0 {
            return anchor.features[j];
        }
        let z: f64 = rng.sample(StandardNormal);
        anchor.features[j] + sigma[j] * F::lit(z)
    });
    query_and_weight(x, anchor.features.view(), bb, Some(kernel))
}

/// Samples from a Gaussian KDE over `train`, restricted to mixture
/// components near the anchor: a training point is picked with probability
/// proportional to its kernel proximity to the anchor, then jittered by
/// `N(0, bandwidth² I)`.
pub fn kde_generation<F: Scalar, B: BlackBox<F> + ?Sized>(
    train: &Dataset<F>,
    anchor: &Example<F>,
    n: usize,
    bandwidth: F,
    bb: &B,
    kernel: &KernelSpec,
    seed: RngSeed,
) -> Result<Neighborhood<F>> {
    check_anchor(anchor, bb)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.dim() != anchor.dim() {
        return Err(Error::invalid("training data and anchor differ in dimension"));
    }
    if n == 0 || bandwidth < F::zero() || !bandwidth.is_finite() {
        return Err(Error::invalid("kde needs n > 0 and a finite nonnegative bandwidth"));
    }
    let d = anchor.dim();
    let width = kernel.width(d);
    let sq: Vec<f64> = train.features().rows().into_iter().map(|r| squared_distance(r, anchor.features.view()).to_f64_lossy()).collect();
    // Shift by the smallest distance so the nearest point has log-weight 0.
    let nearest = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let probs: Vec<f64> = sq.iter().map(|s| (-(s - nearest) / (width * width)).exp()).collect();
    let picker = WeightedIndex::new(&probs).map_err(|e| Error::invalid(format!("kde selection weights: {e}")))?;
    let mut rng = seed.rng();
    let mut x = Array2::zeros((n, d));
    for mut row in x.rows_mut() {
        let center = train.row(picker.sample(&mut rng));
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            row[j] = center[j] + bandwidth * F::lit(z);
        }
    }
    query_and_weight(x, anchor.features.view(), bb, Some(kernel))
}

/// The `n` pool points nearest to the anchor (ties to the lower index), with
/// uniform weight.
pub fn exemplar_selection<F: Scalar, B: BlackBox<F> + ?Sized>(
    pool: &Dataset<F>,
    anchor: &Example<F>,
    n: usize,
    bb: &B,
) -> Result<Neighborhood<F>> {
    check_anchor(anchor, bb)?;
    if n == 0 || pool.len() < n {
        return Err(Error::invalid(format!("cannot select {n} exemplars from a pool of {}", pool.len())));
    }
    let idx = nearest_indices(pool.features().view(), anchor.features.view(), n, None);
    let x = pool.features().select(Axis(0), &idx);
    query_and_weight(x, anchor.features.view(), bb, None)
}

/// Indices of the `k` rows nearest to `point`, optionally skipping one row.
/// Ties resolve to the lower index.
pub fn nearest_indices<F: Scalar>(rows: ndarray::ArrayView2<'_, F>, point: ArrayView1<'_, F>, k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut dist: Vec<(F, usize)> = rows
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, r)| (squared_distance(r, point), i))
        .collect();
    dist.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
    dist.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Base neighborhood plus `k` bootstrap resamples of it.
#[derive(Clone, Debug)]
pub struct EnvironmentSet<F> {
    pub base: Neighborhood<F>,
    pub envs: Vec<Neighborhood<F>>,
    /// Base row drawn for each environment slot.
    pub draws: Vec<Vec<usize>>,
    pub anchor: Example<F>,
}

impl<F: Scalar> EnvironmentSet<F> {
    pub fn k(&self) -> usize {
        self.envs.len()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// The same environments over a subset of feature columns.
    pub fn restrict(&self, features: &[usize]) -> EnvironmentSet<F> {
        EnvironmentSet {
            base: self.base.restrict(features),
            envs: self.envs.iter().map(|e| e.restrict(features)).collect(),
            draws: self.draws.clone(),
            anchor: Example {
                features: self.anchor.features.select(Axis(0), features),
                label: self.anchor.label,
            },
        }
    }
}

/// `k` environments, each `n` draws with replacement from the base.
pub fn bootstrap_environments<F: Scalar>(base: Neighborhood<F>, anchor: Example<F>, k: usize, seed: RngSeed) -> Result<EnvironmentSet<F>> {
    if k < 2 {
        return Err(Error::invalid("need at least two environments"));
    }
    if base.is_empty() {
        return Err(Error::invalid("empty base neighborhood"));
    }
    if base.dim() != anchor.dim() {
        return Err(Error::invalid("anchor and neighborhood differ in dimension"));
    }
    let n = base.len();
    let mut rng = seed.rng();
    let draws: Vec<Vec<usize>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(0..n)).collect()).collect();
    let envs = draws.iter().map(|idx| base.select(idx)).collect();
    Ok(EnvironmentSet { base, envs, draws, anchor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{builtin_linear, with_cache};
    use crate::data::{load_csv, Standardizer, Task};
    use ndarray::array;

    fn iris_std() -> Dataset<f64> {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
        let ds = load_csv(path, Task::Classification, Some("species")).unwrap();
        Standardizer::fit(&ds).unwrap().transform(&ds).unwrap()
    }

    #[test]
    fn kernel_weights() {
        let k = KernelSpec::new(0.5).unwrap();
        assert_eq!(k.weight(0.0f64, 4), 1.0);
        let w = k.width(4);
        assert_eq!(w, 1.0);
        assert!((k.weight(w * w, 4) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(KernelSpec::new(0.0).is_err());
    }

    #[test]
    fn weights_decrease_with_distance() {
        let k = KernelSpec::new(0.25).unwrap();
        let ws: Vec<f64> = (0..20).map(|i| k.weight((i as f64 * 0.1).powi(2), 2)).collect();
        assert!(ws.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn perturbation_queries_once_per_sample() {
        let bb = with_cache(builtin_linear(array![1.0, -1.0], 0.0).unwrap());
        let anchor = Example::new(array![0.0, 0.0]).unwrap();
        let nb = random_perturbation(&anchor, 25, array![1.0, 1.0].view(), &bb, &KernelSpec::new(0.5).unwrap(), RngSeed(3)).unwrap();
        assert_eq!(nb.len(), 25);
        assert_eq!(bb.ledger().total_queries(), 25);
        for i in 0..nb.len() {
            let s = nb.sample(i);
            assert_eq!(s.target, s.features[0] - s.features[1]);
            assert!(s.weight > 0.0 && s.weight <= 1.0);
        }
        let es = bootstrap_environments(nb, anchor, 4, RngSeed(1)).unwrap();
        assert_eq!(es.k(), 4);
        assert_eq!(bb.ledger().total_queries(), 25);
    }

    #[test]
    fn perturbation_mean_concentrates() {
        // 99% two-sided normal quantile is 2.576 < 3.
        let ds = iris_std();
        let anchor = ds.example(17);
        let bb = builtin_linear(Array1::<f64>::ones(4), 0.0).unwrap();
        let sigma = Array1::ones(4);
        let mut fails = 0;
        let trials = 200;
        for s in 0..trials {
            let nb = random_perturbation(&anchor, 10, sigma.view(), &bb, &KernelSpec::new(0.25).unwrap(), RngSeed(s)).unwrap();
            let mean = nb.x.mean_axis(Axis(0)).unwrap();
            let bound = 3.0 / 10f64.sqrt();
            if (&mean - &anchor.features).iter().any(|d| d.abs() > bound) {
                fails += 1;
            }
        }
        // Per-trial failure probability is about 4 · 0.0027.
        assert!(fails <= 8, "{fails} of {trials} trials outside the bound");
    }

    #[test]
    fn seed_stability() {
        let bb = builtin_linear(array![0.3, 0.7], 0.1).unwrap();
        let anchor = Example::new(array![1.0, -1.0]).unwrap();
        let k = KernelSpec::new(0.1).unwrap();
        let a = random_perturbation(&anchor, 12, array![1.0, 2.0].view(), &bb, &k, RngSeed(5)).unwrap();
        let b = random_perturbation(&anchor, 12, array![1.0, 2.0].view(), &bb, &k, RngSeed(5)).unwrap();
        assert_eq!(a, b);
        let ea = bootstrap_environments(a, anchor.clone(), 3, RngSeed(8)).unwrap();
        let eb = bootstrap_environments(b, anchor, 3, RngSeed(8)).unwrap();
        assert_eq!(ea.envs, eb.envs);
    }

    #[test]
    fn bootstrap_of_single_sample() {
        let nb = Neighborhood::new(array![[1.0, 2.0]], array![3.0], array![0.5]).unwrap();
        let es = bootstrap_environments(nb.clone(), Example::new(array![0.0, 0.0]).unwrap(), 2, RngSeed(0)).unwrap();
        assert_eq!(es.envs[0], nb);
        assert_eq!(es.envs[1], nb);
    }

    #[test]
    fn bootstrap_distinct_fraction() {
        let n = 1000;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let nb = Neighborhood::new(x, Array1::zeros(n), Array1::ones(n)).unwrap();
        let es = bootstrap_environments(nb, Example::new(array![0.0]).unwrap(), 2, RngSeed(11)).unwrap();
        let expected = 1.0 - (-1.0f64).exp();
        for draw in &es.draws {
            assert!(draw.iter().all(|&i| i < n));
            let mut seen = vec![false; n];
            draw.iter().for_each(|&i| seen[i] = true);
            let frac = seen.iter().filter(|s| **s).count() as f64 / n as f64;
            assert!((frac - expected).abs() < 0.02, "{frac}");
        }
    }

    #[test]
    fn exemplar_selection_matches_brute_force() {
        let ds = iris_std();
        let bb = builtin_linear(Array1::<f64>::ones(4), 0.0).unwrap();
        let anchor = ds.example(60);
        let nb = exemplar_selection(&ds, &anchor, 3, &bb).unwrap();
        let mut all: Vec<(f64, usize)> = (0..ds.len())
            .map(|i| ((&ds.row(i) - &anchor.features).mapv(|v| v * v).sum(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expect = ds.features().select(Axis(0), &[all[0].1, all[1].1, all[2].1]);
        assert_eq!(nb.x, expect);
        assert_eq!(nb.x.row(0), anchor.features);
        assert!(nb.weight.iter().all(|&w| w == 1.0));

        let whole = exemplar_selection(&ds, &anchor, ds.len(), &bb).unwrap();
        assert_eq!(whole.len(), ds.len());
        assert!(exemplar_selection(&ds, &anchor, ds.len() + 1, &bb).is_err());
    }

    #[test]
    fn kde_degenerate_bandwidth() {
        let train = Dataset::from_matrix(array![[2.0, -1.0]], Task::Regression).unwrap();
        let bb = builtin_linear(array![1.0, 1.0], 0.0).unwrap();
        let anchor = Example::new(array![0.0, 0.0]).unwrap();
        let nb = kde_generation(&train, &anchor, 7, 0.0, &bb, &KernelSpec::new(0.5).unwrap(), RngSeed(1)).unwrap();
        for row in nb.x.rows() {
            assert_eq!(row, array![2.0, -1.0]);
        }
    }

    #[test]
    fn kde_moments_around_single_point() {
        let train = Dataset::from_matrix(array![[1.0f64, 2.0]], Task::Regression).unwrap();
        let anchor = train.example(0);
        let bb = builtin_linear(array![1.0, 1.0], 0.0).unwrap();
        let b = 0.5;
        let nb = kde_generation(&train, &anchor, 10_000, b, &bb, &KernelSpec::new(0.5).unwrap(), RngSeed(2)).unwrap();
        let mean = nb.x.mean_axis(Axis(0)).unwrap();
        let c = &nb.x - &mean;
        let cov = c.t().dot(&c) / 10_000.0;
        // Standard error of a variance estimate is about b²·sqrt(2/N) = 0.0035.
        assert!((mean[0] - 1.0).abs() < 0.02 && (mean[1] - 2.0).abs() < 0.02);
        assert!((cov[[0, 0]] - b * b).abs() < 0.015);
        assert!((cov[[1, 1]] - b * b).abs() < 0.015);
        assert!(cov[[0, 1]].abs() < 0.015);
    }

    #[test]
    fn kde_samples_stay_closer_to_data() {
        let ds = iris_std();
        let bb = builtin_linear(Array1::<f64>::ones(4), 0.0).unwrap();
        let k = KernelSpec::new(0.5).unwrap();
        let nearest_mean = |nb: &Neighborhood<f64>| {
            nb.x.rows()
                .into_iter()
                .map(|r| {
                    let i = nearest_indices(ds.features().view(), r, 1, None)[0];
                    (&r - &ds.row(i)).mapv(|v| v * v).sum().sqrt()
                })
                .sum::<f64>()
                / nb.len() as f64
        };
        let mut kde_total = 0.0;
        let mut rnd_total = 0.0;
        for (s, i) in [3usize, 40, 77, 101, 140].iter().enumerate() {
            let anchor = ds.example(*i);
            let kde = kde_generation(&ds, &anchor, 50, 0.3, &bb, &k, RngSeed(s as u64)).unwrap();
            let rnd = random_perturbation(&anchor, 50, Array1::ones(4).view(), &bb, &k, RngSeed(s as u64)).unwrap();
            kde_total += nearest_mean(&kde);
            rnd_total += nearest_mean(&rnd);
        }
        assert!(kde_total < rnd_total, "kde {kde_total} vs random {rnd_total}");
    }
}
