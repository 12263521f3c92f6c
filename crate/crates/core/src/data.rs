//! Datasets, CSV I/O and standardization.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::scalar::{all_finite, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Classification => f.write_str("classification"),
            Task::Regression => f.write_str("regression"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label<F> {
    Class(usize),
    Target(F),
}

impl<F: Scalar> Label<F> {
    pub fn class(&self) -> Option<usize> {
        match *self {
            Label::Class(c) => Some(c),
            Label::Target(_) => None,
        }
    }

    pub fn as_scalar(&self) -> F {
        match *self {
            Label::Class(c) => F::of_usize(c),
            Label::Target(y) => y,
        }
    }
}

/// A single point to explain.
#[derive(Clone, Debug, PartialEq)]
pub struct Example<F> {
    pub features: Array1<F>,
    pub label: Option<Label<F>>,
}

impl<F: Scalar> Example<F> {
    pub fn new(features: Array1<F>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("example needs at least one feature"));
        }
        if !features.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("example features must be finite"));
        }
        Ok(Example { features, label: None })
    }

    pub fn with_label(mut self, label: Label<F>) -> Self {
        self.label = Some(label);
        self
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Immutable collection of examples sharing one feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<F> {
    features: Array2<F>,
    labels: Vec<Option<Label<F>>>,
    feature_names: Vec<String>,
    task: Task,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(
        features: Array2<F>,
        labels: Vec<Option<Label<F>>>,
        feature_names: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if d == 0 {
            return Err(Error::Schema("dataset needs at least one feature".into()));
        }
        if labels.len() != n {
            return Err(Error::Schema(format!("{} labels for {n} rows", labels.len())));
        }
        if feature_names.len() != d {
            return Err(Error::Schema(format!("{} feature names for {d} columns", feature_names.len())));
        }
        if !features.iter().all(|x| x.is_finite()) {
            return Err(Error::Schema("features must be finite".into()));
        }
        for label in labels.iter().flatten() {
            match (task, label) {
                (Task::Classification, Label::Target(_)) => {
                    return Err(Error::Schema("classification dataset with real-valued label".into()))
                }
                (Task::Regression, Label::Class(_)) => {
                    return Err(Error::Schema("regression dataset with class label".into()))
                }
                (_, Label::Target(y)) if !y.is_finite() => {
                    return Err(Error::Schema("non-finite regression target".into()))
                }
                _ => {}
            }
        }
        Ok(Dataset { features, labels, feature_names, task })
    }

    /// Unlabeled dataset with generated feature names.
    pub fn from_matrix(features: Array2<F>, task: Task) -> Result<Self> {
        let d = features.ncols();
        let n = features.nrows();
        let names = (0..d).map(|j| format!("x{j}")).collect();
        Dataset::new(features, vec![None; n], names, task)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn features(&self) -> &Array2<F> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, F> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[Option<Label<F>>] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn example(&self, i: usize) -> Example<F> {
        Example { features: self.features.row(i).to_owned(), label: self.labels[i] }
    }

    pub fn examples(&self) -> impl Iterator<Item = Example<F>> + '_ {
        (0..self.len()).map(move |i| self.example(i))
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Class index per row, when every row carries one.
    pub fn class_labels(&self) -> Option<Vec<usize>> {
        self.labels.iter().map(|l| l.and_then(|l| l.class())).collect()
    }

    /// Number of classes C such that all labels lie in `[0, C)`.
    pub fn n_classes(&self) -> usize {
        self.labels
            .iter()
            .filter_map(|l| l.and_then(|l| l.class()))
            .max()
            .map_or(0, |c| c + 1)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset<F> {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            task: self.task,
        }
    }

    pub fn with_features(&self, features: Array2<F>) -> Result<Dataset<F>> {
        if features.dim() != self.features.dim() {
            return Err(Error::invalid("replacement feature matrix has a different shape"));
        }
        Dataset::new(features, self.labels.clone(), self.feature_names.clone(), self.task)
    }
}

/// Reads a CSV with a mandatory header row. Every column except
/// `label_column` is a numeric feature.
pub fn load_csv<F: Scalar>(path: impl AsRef<Path>, task: Task, label_column: Option<&str>) -> Result<Dataset<F>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    read_csv(file, task, label_column)
}

pub fn read_csv<F: Scalar, R: std::io::Read>(reader: R, task: Task, label_column: Option<&str>) -> Result<Dataset<F>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("label column {name:?} not in header")))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| Some(j) != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Schema(e.to_string()))?;
        for &j in &feature_cols {
            let cell = record[j].trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::Schema(format!("row {}: column {:?} is not numeric: {cell:?}", row_no + 1, header[j]))
            })?;
            if !v.is_finite() {
                return Err(Error::Schema(format!("row {}: non-finite value in {:?}", row_no + 1, header[j])));
            }
            values.push(F::lit(v));
        }
        if let Some(l) = label_idx {
            raw_labels.push(record[l].trim().to_string());
        }
    }
    let n = values.len() / feature_cols.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let features = Array2::from_shape_vec((n, feature_cols.len()), values).map_err(|e| Error::Schema(e.to_string()))?;
    let labels = match label_idx {
        None => vec![None; n],
        Some(_) => parse_labels(&raw_labels, task)?,
    };
    let names = feature_cols.iter().map(|&j| header[j].clone()).collect();
    Dataset::new(features, labels, names, task)
}

fn parse_labels<F: Scalar>(raw: &[String], task: Task) -> Result<Vec<Option<Label<F>>>> {
    match task {
        Task::Regression => raw
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map(|y| Some(Label::Target(F::lit(y))))
                    .map_err(|_| Error::Schema(format!("regression target {s:?} is not numeric")))
            })
            .collect(),
        Task::Classification => {
            let as_int: Option<Vec<usize>> = raw.iter().map(|s| s.parse::<usize>().ok()).collect();
            let classes = match as_int {
                Some(ints) => ints,
                None => {
                    // Named classes get indices in sorted name order.
                    let names: BTreeMap<&str, usize> = raw.iter().map(|s| (s.as_str(), 0)).collect();
                    let index: BTreeMap<&str, usize> = names.keys().enumerate().map(|(i, k)| (*k, i)).collect();
                    raw.iter().map(|s| index[s.as_str()]).collect()
                }
            };
            Ok(classes.into_iter().map(|c| Some(Label::Class(c))).collect())
        }
    }
}

/// Writes a dataset in the same format `load_csv` reads. Values use the
/// shortest representation that round-trips.
pub fn write_csv<F: Scalar, W: Write>(ds: &Dataset<F>, label_column: Option<&str>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ds.feature_names.clone();
    let with_labels = label_column.is_some() && ds.is_labeled();
    if with_labels {
        header.push(label_column.unwrap_or("label").to_string());
    }
    wtr.write_record(&header).map_err(|e| Error::Schema(e.to_string()))?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(|v| format!("{:?}", v.to_f64_lossy())).collect();
        if with_labels {
            rec.push(match ds.labels[i] {
                Some(Label::Class(c)) => c.to_string(),
                Some(Label::Target(y)) => format!("{:?}", y.to_f64_lossy()),
                None => String::new(),
            });
        }
        wtr.write_record(&rec).map_err(|e| Error::Schema(e.to_string()))?;
    }
    wtr.flush().map_err(|source| Error::Io { path: "<writer>".into(), source })?;
    Ok(())
}

/// Random disjoint split; the train part has `ceil((1 - f) n)` rows.
pub fn train_test_split<F: Scalar>(ds: &Dataset<F>, test_fraction: f64, seed: RngSeed) -> Result<(Dataset<F>, Dataset<F>)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let n = ds.len();
    let n_train = (((1.0 - test_fraction) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_train = n_train.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    let (train, test) = idx.split_at(n_train);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Per-feature z-scoring fitted on a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<F> {
    pub mean: Array1<F>,
    pub std: Array1<F>,
}

impl<F: Scalar> Standardizer<F> {
    pub fn fit(train: &Dataset<F>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let x = train.features();
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let std = x.std_axis(Axis(0), F::zero()).mapv(|s| if s > F::zero() && s.is_finite() { s } else { F::one() });
        Ok(Standardizer { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Standardizer { mean: Array1::zeros(d), std: Array1::ones(d) }
    }

    pub fn transform(&self, ds: &Dataset<F>) -> Result<Dataset<F>> {
        let z = (ds.features() - &self.mean) / &self.std;
        ds.with_features(z)
    }

    pub fn transform_row(&self, x: ArrayView1<'_, F>) -> Array1<F> {
        (&x - &self.mean) / &self.std
    }

    pub fn inverse_row(&self, z: ArrayView1<'_, F>) -> Array1<F> {
        &z * &self.std + &self.mean
    }

    /// Converts standardized-space slopes to raw feature units.
    pub fn raw_coefficients(&self, coefficients: ArrayView1<'_, F>) -> Array1<F> {
        &coefficients / &self.std
    }
}

pub(crate) fn check_finite_row<F: Scalar>(x: ArrayView1<'_, F>) -> Result<()> {
    match x.as_slice() {
        Some(s) if all_finite(s) => Ok(()),
        None if x.iter().all(|v| v.is_finite()) => Ok(()),
        _ => Err(Error::invalid("non-finite feature value")),
    }
}
