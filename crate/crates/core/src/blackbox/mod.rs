//! Query-only access to the model being explained.
//!
//! Every model is reached through [`BlackBox::predict_batch`]; explainers
//! never see parameters or gradients. Wrappers add caching with query
//! accounting ([`Cached`]) and translation from the standardized explanation
//! space back to raw model units ([`Unstandardize`]).

mod forest;
mod subprocess;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::{Standardizer, Task};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use forest::{builtin_forest, ForestParams, RandomForest};
pub use subprocess::{subprocess_blackbox, SubprocessBlackBox, SubprocessOptions};

/// A model reachable only through input → output queries.
pub trait BlackBox<F: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;

    fn task(&self) -> Task;

    /// Probability channel being explained, for classifiers.
    fn class_of_interest(&self) -> Option<usize> {
        None
    }

    /// One output per input row, in order.
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>>;

    fn predict_one(&self, x: ArrayView1<'_, F>) -> Result<F> {
        let xs = x.insert_axis(Axis(0));
        Ok(self.predict_batch(xs)?[0])
    }
}

/// A classifier exposing every class probability; a [`ProbaChannel`] turns it
/// into a scalar black-box.
pub trait Classifier<F: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;

    fn n_classes(&self) -> usize;

    /// Rows are examples, columns are classes; each row sums to one.
    fn predict_proba(&self, xs: ArrayView2<'_, F>) -> Result<Array2<F>>;

    fn predict_class(&self, x: ArrayView1<'_, F>) -> Result<usize> {
        let p = self.predict_proba(x.insert_axis(Axis(0)))?;
        Ok(argmax(p.row(0)))
    }
}

pub(crate) fn argmax<F: Scalar>(row: ArrayView1<'_, F>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl<F: Scalar, B: BlackBox<F> + ?Sized> BlackBox<F> for Arc<B> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn task(&self) -> Task {
        (**self).task()
    }
    fn class_of_interest(&self) -> Option<usize> {
        (**self).class_of_interest()
    }
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        (**self).predict_batch(xs)
    }
}

impl<F: Scalar, B: BlackBox<F> + ?Sized> BlackBox<F> for &B {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn task(&self) -> Task {
        (**self).task()
    }
    fn class_of_interest(&self) -> Option<usize> {
        (**self).class_of_interest()
    }
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        (**self).predict_batch(xs)
    }
}

impl<F: Scalar, C: Classifier<F> + ?Sized> Classifier<F> for Arc<C> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn predict_proba(&self, xs: ArrayView2<'_, F>) -> Result<Array2<F>> {
        (**self).predict_proba(xs)
    }
}

fn check_batch<F: Scalar>(xs: &ArrayView2<'_, F>, d: usize) -> Result<()> {
    if xs.ncols() != d {
        return Err(Error::invalid(format!("batch has {} columns, model expects {d}", xs.ncols())));
    }
    Ok(())
}

/// `f(x) = wᵀx + b`.
#[derive(Clone, Debug)]
pub struct Linear<F> {
    weights: Array1<F>,
    intercept: F,
}

pub fn builtin_linear<F: Scalar>(weights: Array1<F>, intercept: F) -> Result<Linear<F>> {
    if weights.is_empty() || !weights.iter().all(|w| w.is_finite()) || !intercept.is_finite() {
        return Err(Error::invalid("linear model needs finite, nonempty weights"));
    }
    Ok(Linear { weights, intercept })
}

impl<F: Scalar> Linear<F> {
    pub fn weights(&self) -> &Array1<F> {
        &self.weights
    }
    pub fn intercept(&self) -> F {
        self.intercept
    }
}

impl<F: Scalar> BlackBox<F> for Linear<F> {
    fn dimension(&self) -> usize {
        self.weights.len()
    }
    fn task(&self) -> Task {
        Task::Regression
    }
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        check_batch(&xs, self.weights.len())?;
        Ok(xs.dot(&self.weights) + self.intercept)
    }
}

/// `f(x) = magnitude · |x[axis]|`: the local slope flips sign at `x[axis] = 0`.
#[derive(Clone, Debug)]
pub struct PiecewiseSign<F> {
    dim: usize,
    axis: usize,
    magnitude: F,
}

pub fn builtin_piecewise_sign<F: Scalar>(dim: usize, axis: usize, magnitude: F) -> Result<PiecewiseSign<F>> {
    if axis >= dim {
        return Err(Error::invalid(format!("axis {axis} out of range for dimension {dim}")));
    }
    if !magnitude.is_finite() {
        return Err(Error::invalid("magnitude must be finite"));
    }
    Ok(PiecewiseSign { dim, axis, magnitude })
}

impl<F: Scalar> BlackBox<F> for PiecewiseSign<F> {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn task(&self) -> Task {
        Task::Regression
    }
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        check_batch(&xs, self.dim)?;
        Ok(xs.column(self.axis).mapv(|v| self.magnitude * v.abs()))
    }
}

/// Fixes one class of a [`Classifier`] as the explained output.
#[derive(Clone, Debug)]
pub struct ProbaChannel<C> {
    model: C,
    class: usize,
}

impl<C> ProbaChannel<C> {
    pub fn new<F: Scalar>(model: C, class: usize) -> Result<Self>
    where
        C: Classifier<F>,
    {
        if class >= model.n_classes() {
            return Err(Error::invalid(format!("class {class} out of range for {} classes", model.n_classes())));
        }
        Ok(ProbaChannel { model, class })
    }
}

impl<F: Scalar, C: Classifier<F>> BlackBox<F> for ProbaChannel<C> {
    fn dimension(&self) -> usize {
        self.model.dimension()
    }
    fn task(&self) -> Task {
        Task::Classification
    }
    fn class_of_interest(&self) -> Option<usize> {
        Some(self.class)
    }
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        Ok(self.model.predict_proba(xs)?.column(self.class).to_owned())
    }
}

/// Presents a raw-unit model in standardized coordinates: queries are mapped
/// back through the inverse z-score before reaching the model.
#[derive(Clone, Debug)]
pub struct Unstandardize<B, F> {
    inner: B,
    scaler: Standardizer<F>,
}

impl<B, F: Scalar> Unstandardize<B, F> {
    pub fn new(inner: B, scaler: Standardizer<F>) -> Self {
        Unstandardize { inner, scaler }
    }

    fn to_raw(&self, xs: ArrayView2<'_, F>) -> Array2<F> {
        &xs * &self.scaler.std + &self.scaler.mean
    }
}

impl<F: Scalar, B: BlackBox<F>> BlackBox<F> for Unstandardize<B, F> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn task(&self) -> Task {
        self.inner.task()
    }
    fn class_of_interest(&self) -> Option<usize> {
        self.inner.class_of_interest()
    }
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        check_batch(&xs, self.inner.dimension())?;
        self.inner.predict_batch(self.to_raw(xs).view())
    }
}

impl<F: Scalar, C: Classifier<F>> Classifier<F> for Unstandardize<C, F> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }
    fn predict_proba(&self, xs: ArrayView2<'_, F>) -> Result<Array2<F>> {
        check_batch(&xs, self.inner.dimension())?;
        self.inner.predict_proba(self.to_raw(xs).view())
    }
}

/// Query accounting shared by a [`Cached`] black-box and its clones.
#[derive(Debug, Default)]
pub struct QueryLedger {
    total_queries: AtomicU64,
    cache_hits: AtomicU64,
}

impl QueryLedger {
    /// Distinct vectors forwarded to the underlying model.
    pub fn total_queries(&self) -> u64 {
        self.total_queries.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }
}

/// Memoizes outputs keyed on the exact bit pattern of each input vector.
pub struct Cached<B, F> {
    inner: B,
    memo: Mutex<HashMap<Vec<u64>, F>>,
    ledger: Arc<QueryLedger>,
}

pub fn with_cache<F: Scalar, B: BlackBox<F>>(bb: B) -> Cached<B, F> {
    Cached { inner: bb, memo: Mutex::new(HashMap::new()), ledger: Arc::new(QueryLedger::default()) }
}

impl<B, F> Cached<B, F> {
    pub fn ledger(&self) -> Arc<QueryLedger> {
        Arc::clone(&self.ledger)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

fn bit_key<F: Scalar>(row: ArrayView1<'_, F>) -> Vec<u64> {
    row.iter().map(|v| v.to_f64_lossy().to_bits()).collect()
}

impl<F: Scalar, B: BlackBox<F>> BlackBox<F> for Cached<B, F> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn task(&self) -> Task {
        self.inner.task()
    }
    fn class_of_interest(&self) -> Option<usize> {
        self.inner.class_of_interest()
    }
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        check_batch(&xs, self.inner.dimension())?;
        let keys: Vec<Vec<u64>> = xs.rows().into_iter().map(bit_key).collect();
        let mut out = vec![F::zero(); keys.len()];

        // Rows still missing after the lookup, deduplicated within the batch.
        let mut pending: Vec<usize> = Vec::new();
        let mut pending_keys: HashMap<&[u64], usize> = HashMap::new();
        let mut hits = 0u64;
        {
            let memo = self.memo.lock().expect("cache poisoned");
            for (i, key) in keys.iter().enumerate() {
                if let Some(&y) = memo.get(key) {
                    out[i] = y;
                    hits += 1;
                } else if pending_keys.contains_key(key.as_slice()) {
                    hits += 1;
                } else {
                    pending_keys.insert(key.as_slice(), pending.len());
                    pending.push(i);
                }
            }
        }
        if !pending.is_empty() {
            let fresh = self.inner.predict_batch(xs.select(Axis(0), &pending).view())?;
            if fresh.len() != pending.len() {
                return Err(Error::BlackBox(format!("model returned {} outputs for {} inputs", fresh.len(), pending.len())));
            }
            let mut memo = self.memo.lock().expect("cache poisoned");
            for (slot, &row) in pending.iter().enumerate() {
                memo.insert(keys[row].clone(), fresh[slot]);
            }
            for (i, key) in keys.iter().enumerate() {
                if let Some(&slot) = pending_keys.get(key.as_slice()) {
                    out[i] = fresh[slot];
                }
            }
            self.ledger.total_queries.fetch_add(pending.len() as u64, Ordering::SeqCst);
        }
        self.ledger.cache_hits.fetch_add(hits, Ordering::SeqCst);
        Ok(Array1::from(out))
    }
}

/// Counts every forwarded row without caching.
pub struct Counting<B> {
    inner: B,
    ledger: Arc<QueryLedger>,
}

impl<B> Counting<B> {
    pub fn new(inner: B) -> Self {
        Counting { inner, ledger: Arc::new(QueryLedger::default()) }
    }

    pub fn ledger(&self) -> Arc<QueryLedger> {
        Arc::clone(&self.ledger)
    }
}

impl<F: Scalar, B: BlackBox<F>> BlackBox<F> for Counting<B> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn task(&self) -> Task {
        self.inner.task()
    }
    fn class_of_interest(&self) -> Option<usize> {
        self.inner.class_of_interest()
    }
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        let y = self.inner.predict_batch(xs)?;
        self.ledger.total_queries.fetch_add(xs.nrows() as u64, Ordering::SeqCst);
        Ok(y)
    }
}

/// Validates a model reply against the query-only contract.
pub(crate) fn check_outputs<F: Scalar>(y: &Array1<F>, expected: usize, task: Task) -> Result<()> {
    if y.len() != expected {
        return Err(Error::BlackBox(format!("{} outputs for {expected} inputs", y.len())));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::BlackBox("non-finite model output".into()));
    }
    if task == Task::Classification && y.iter().any(|&v| v < F::zero() || v > F::one()) {
        return Err(Error::BlackBox("class probability outside [0, 1]".into()));
    }
    Ok(())
}
