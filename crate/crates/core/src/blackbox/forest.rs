//! Bagged CART ensemble used as a desk-scale black-box.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_batch, BlackBox, Classifier};
use crate::data::{Dataset, Label, Task};
use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))` for
    /// classification and `max(1, d / 3)` for regression.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 50, max_depth: 8, min_samples_split: 2, max_features: None }
    }
}

#[derive(Clone, Debug)]
enum Node<F> {
    Leaf(F),
    Split { feature: usize, threshold: F, left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Tree<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tree<F> {
    fn predict(&self, x: ArrayView1<'_, F>) -> F {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Random forest over a labeled dataset. Classification leaves hold the
/// majority class and the ensemble output is the vote fraction per class.
#[derive(Clone, Debug)]
pub struct RandomForest<F> {
    trees: Vec<Tree<F>>,
    dim: usize,
    task: Task,
    n_classes: usize,
    class_of_interest: Option<usize>,
}

pub fn builtin_forest<F: Scalar>(ds: &Dataset<F>, trees: usize, max_depth: usize, seed: RngSeed) -> Result<RandomForest<F>> {
    RandomForest::fit(ds, ForestParams { trees, max_depth, ..ForestParams::default() }, seed)
}

struct Builder<'a, F> {
    x: ArrayView2<'a, F>,
    y: &'a [F],
    task: Task,
    n_classes: usize,
    params: ForestParams,
    max_features: usize,
}

impl<F: Scalar> RandomForest<F> {
    pub fn fit(ds: &Dataset<F>, params: ForestParams, seed: RngSeed) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !ds.is_labeled() {
            return Err(Error::Train("dataset is unlabeled".into()));
        }
        if params.trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        let task = ds.task();
        let y: Vec<F> = ds.labels().iter().map(|l| l.expect("labeled").as_scalar()).collect();
        let n_classes = if task == Task::Classification {
            let c = ds.n_classes();
            let mut seen = vec![false; c];
            for l in ds.labels().iter().flatten() {
                if let Label::Class(k) = l {
                    seen[*k] = true;
                }
            }
            if c < 2 || seen.iter().any(|s| !s) {
                let missing: Vec<usize> = (0..c).filter(|&k| !seen[k]).collect();
                return Err(Error::Train(format!(
                    "need at least two classes, all present; {c} classes with {missing:?} absent"
                )));
            }
            c
        } else {
            0
        };
        let d = ds.dim();
        let max_features = params
            .max_features
            .unwrap_or(match task {
                Task::Classification => (d as f64).sqrt().ceil() as usize,
                Task::Regression => (d / 3).max(1),
            })
            .clamp(1, d);
        let builder = Builder { x: ds.features().view(), y: &y, task, n_classes, params, max_features };
        let mut rng = seed.rng();
        let n = ds.len();
        let trees = (0..params.trees)
            .map(|_| {
                let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                builder.grow(boot, &mut rng)
            })
            .collect();
        Ok(RandomForest { trees, dim: d, task, n_classes, class_of_interest: None })
    }

    /// Same forest, explaining the probability of `class`.
    pub fn with_class(mut self, class: usize) -> Result<Self> {
        if self.task != Task::Classification || class >= self.n_classes {
            return Err(Error::invalid(format!("class {class} not available")));
        }
        self.class_of_interest = Some(class);
        Ok(self)
    }

    /// Class predictions (classification) or regression outputs.
    pub fn predict(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        check_batch(&xs, self.dim)?;
        match self.task {
            Task::Classification => {
                let p = self.vote_fractions(xs);
                Ok(p.rows().into_iter().map(|r| F::of_usize(super::argmax(r))).collect())
            }
            Task::Regression => Ok(self.mean_prediction(xs)),
        }
    }

    fn vote_fractions(&self, xs: ArrayView2<'_, F>) -> Array2<F> {
        let mut votes = Array2::<F>::zeros((xs.nrows(), self.n_classes));
        let share = F::one() / F::of_usize(self.trees.len());
        for (i, x) in xs.rows().into_iter().enumerate() {
            for tree in &self.trees {
                let c = tree.predict(x).to_usize().unwrap_or(0).min(self.n_classes - 1);
                votes[[i, c]] += share;
            }
        }
        votes
    }

    fn mean_prediction(&self, xs: ArrayView2<'_, F>) -> Array1<F> {
        let m = F::of_usize(self.trees.len());
        xs.rows().into_iter().map(|x| self.trees.iter().map(|t| t.predict(x)).sum::<F>() / m).collect()
    }

    pub fn accuracy(&self, ds: &Dataset<F>) -> Result<f64> {
        let labels = ds.class_labels().ok_or_else(|| Error::invalid("accuracy needs class labels"))?;
        let pred = self.predict(ds.features().view())?;
        let hits = pred.iter().zip(&labels).filter(|(p, &l)| p.to_usize() == Some(l)).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

impl<F: Scalar> Builder<'_, F> {
    fn grow(&self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree<F> {
        let mut nodes = Vec::new();
        self.build(&rows, 0, rng, &mut nodes);
        Tree { nodes }
    }

    fn leaf_value(&self, rows: &[usize]) -> F {
        match self.task {
            Task::Classification => {
                let mut counts = vec![0usize; self.n_classes];
                for &r in rows {
                    counts[self.y[r].to_usize().unwrap_or(0)] += 1;
                }
                let best = counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).map_or(0, |(c, _)| c);
                F::of_usize(best)
            }
            Task::Regression => rows.iter().map(|&r| self.y[r]).sum::<F>() / F::of_usize(rows.len()),
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        rows.iter().all(|&r| self.y[r] == self.y[rows[0]])
    }

    fn build(&self, rows: &[usize], depth: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node<F>>) -> usize {
        let at = nodes.len();
        nodes.push(Node::Leaf(self.leaf_value(rows)));
        if depth >= self.params.max_depth || rows.len() < self.params.min_samples_split || self.is_pure(rows) {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(rows, rng) else {
            return at;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.x[[r, feature]] <= threshold);
        let l = self.build(&left, depth + 1, rng, nodes);
        let r = self.build(&right, depth + 1, rng, nodes);
        nodes[at] = Node::Split { feature, threshold, left: l, right: r };
        at
    }

    /// Best impurity-reducing split among a random feature subset.
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, F)> {
        let d = self.x.ncols();
        let candidates = sample(rng, d, self.max_features);
        let parent = self.impurity_sum(rows.iter().copied());
        let mut best: Option<(F, usize, F)> = None;
        for feature in candidates.iter() {
            let mut sorted: Vec<usize> = rows.to_vec();
            sorted.sort_by(|&a, &b| self.x[[a, feature]].partial_cmp(&self.x[[b, feature]]).expect("finite"));
            let mut scan = SplitScan::new(self, &sorted);
            for i in 1..sorted.len() {
                scan.move_left(sorted[i - 1]);
                let lo = self.x[[sorted[i - 1], feature]];
                let hi = self.x[[sorted[i], feature]];
                if lo == hi {
                    continue;
                }
                let cost = scan.cost();
                if cost < parent && best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                    best = Some((cost, feature, (lo + hi) / F::lit(2.0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    /// Node impurity multiplied by node size.
    fn impurity_sum(&self, rows: impl Iterator<Item = usize>) -> F {
        let mut scan = SplitScan::empty(self);
        for r in rows {
            scan.add_right(r);
        }
        scan.side_cost(false)
    }
}

/// Running sufficient statistics for a left/right partition of a node.
struct SplitScan<'b, 'a, F> {
    b: &'b Builder<'a, F>,
    counts: [Vec<usize>; 2],
    n: [usize; 2],
    sum: [F; 2],
    sum_sq: [F; 2],
}

impl<'b, 'a, F: Scalar> SplitScan<'b, 'a, F> {
    fn empty(b: &'b Builder<'a, F>) -> Self {
        SplitScan {
            b,
            counts: [vec![0; b.n_classes], vec![0; b.n_classes]],
            n: [0, 0],
            sum: [F::zero(); 2],
            sum_sq: [F::zero(); 2],
        }
    }

    fn new(b: &'b Builder<'a, F>, rows: &[usize]) -> Self {
        let mut s = Self::empty(b);
        for &r in rows {
            s.add_right(r);
        }
        s
    }

    fn update(&mut self, side: usize, r: usize, sign: i64) {
        let y = self.b.y[r];
        if self.b.task == Task::Classification {
            let c = y.to_usize().unwrap_or(0);
            self.counts[side][c] = (self.counts[side][c] as i64 + sign) as usize;
        }
        self.n[side] = (self.n[side] as i64 + sign) as usize;
        let s = F::lit(sign as f64);
        self.sum[side] += s * y;
        self.sum_sq[side] += s * y * y;
    }

    fn add_right(&mut self, r: usize) {
        self.update(1, r, 1);
    }

    fn move_left(&mut self, r: usize) {
        self.update(1, r, -1);
        self.update(0, r, 1);
    }

    fn side_cost(&self, left: bool) -> F {
        let side = usize::from(!left);
        let n = self.n[side];
        if n == 0 {
            return F::zero();
        }
        let nf = F::of_usize(n);
        match self.b.task {
            // n · Gini
            Task::Classification => {
                let sq: F = self.counts[side].iter().map(|&c| F::of_usize(c) * F::of_usize(c)).sum();
                nf - sq / nf
            }
            // sum of squared deviations
            Task::Regression => (self.sum_sq[side] - self.sum[side] * self.sum[side] / nf).max(F::zero()),
        }
    }

    fn cost(&self) -> F {
        self.side_cost(true) + self.side_cost(false)
    }
}

impl<F: Scalar> Classifier<F> for RandomForest<F> {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn predict_proba(&self, xs: ArrayView2<'_, F>) -> Result<Array2<F>> {
        check_batch(&xs, self.dim)?;
        if self.task != Task::Classification {
            return Err(Error::invalid("regression forest has no class probabilities"));
        }
        Ok(self.vote_fractions(xs))
    }
}

impl<F: Scalar> BlackBox<F> for RandomForest<F> {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn task(&self) -> Task {
        self.task
    }
    fn class_of_interest(&self) -> Option<usize> {
        self.class_of_interest
    }
    /// Vote fraction for the class of interest (class 0 when unset), or the
    /// mean tree output for regression.
    fn predict_batch(&self, xs: ArrayView2<'_, F>) -> Result<Array1<F>> {
        check_batch(&xs, self.dim)?;
        match self.task {
            Task::Classification => Ok(self.vote_fractions(xs).column(self.class_of_interest.unwrap_or(0)).to_owned()),
            Task::Regression => Ok(self.mean_prediction(xs)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv, train_test_split};
    use ndarray::array;

    fn iris() -> Dataset<f64> {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
        load_csv(path, Task::Classification, Some("species")).unwrap()
    }

    #[test]
    fn iris_accuracy() {
        let (train, test) = train_test_split(&iris(), 0.2, RngSeed(42)).unwrap();
        let rf = builtin_forest(&train, 50, 8, RngSeed(1)).unwrap();
        let acc = rf.accuracy(&test).unwrap();
        assert!(acc >= 0.85, "accuracy {acc}");
    }

    #[test]
    fn single_class_fails() {
        let x = array![[1.0], [2.0], [3.0]];
        let labels = vec![Some(Label::Class(0)); 3];
        let ds = Dataset::new(x, labels, vec!["a".into()], Task::Classification).unwrap();
        assert!(matches!(builtin_forest(&ds, 5, 3, RngSeed(0)), Err(Error::Train(_))));
    }

    #[test]
    fn absent_class_fails() {
        let x = array![[1.0], [2.0], [3.0]];
        let labels = vec![Some(Label::Class(0)), Some(Label::Class(2)), Some(Label::Class(2))];
        let ds = Dataset::new(x, labels, vec!["a".into()], Task::Classification).unwrap();
        assert!(matches!(builtin_forest(&ds, 5, 3, RngSeed(0)), Err(Error::Train(_))));
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = iris();
        let a = builtin_forest(&ds, 10, 5, RngSeed(3)).unwrap();
        let b = builtin_forest(&ds, 10, 5, RngSeed(3)).unwrap();
        let probe = array![[5.0, 3.0, 1.5, 0.2], [6.0, 2.9, 4.5, 1.5], [7.0, 3.0, 6.0, 2.0]];
        assert_eq!(a.predict_proba(probe.view()).unwrap(), b.predict_proba(probe.view()).unwrap());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let rf = builtin_forest(&iris(), 7, 4, RngSeed(5)).unwrap();
        let p = rf.predict_proba(iris().features().view()).unwrap();
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_forest_fits_step() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let labels = (0..40).map(|i| Some(Label::Target(if i < 20 { 0.0 } else { 5.0 }))).collect();
        let ds = Dataset::new(x, labels, vec!["a".into()], Task::Regression).unwrap();
        let rf = builtin_forest(&ds, 20, 4, RngSeed(2)).unwrap();
        let y = rf.predict_batch(array![[2.0], [37.0]].view()).unwrap();
        assert!(y[0] < 1.0 && y[1] > 4.0, "{y:?}");
    }
}
