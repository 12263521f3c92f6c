//! Small dense helpers: weighted moments, Cholesky solves, power iteration.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::neighborhood::Neighborhood;
use crate::scalar::Scalar;

/// Weighted least-squares sufficient statistics of a neighborhood on
/// centered data. Weights are normalized to sum to one, so
/// `Σ w̄ (y − βᵀx)² = yty − 2βᵀxty + βᵀ gram β` for centered `x`, `y`.
#[derive(Clone, Debug)]
pub struct WeightedMoments<F> {
    pub gram: Array2<F>,
    pub xty: Array1<F>,
    pub yty: F,
    pub x_mean: Array1<F>,
    pub y_mean: F,
}

impl<F: Scalar> WeightedMoments<F> {
    pub fn from_neighborhood(nb: &Neighborhood<F>) -> Result<Self> {
        if nb.is_empty() {
            return Err(Error::invalid("empty neighborhood"));
        }
        let total: F = nb.weight.sum();
        if !(total > F::zero()) || !total.is_finite() {
            return Err(Error::SingularSystem);
        }
        let w = &nb.weight / total;
        let x_mean = nb.x.t().dot(&w);
        let y_mean = nb.target.dot(&w);
        let xc = &nb.x - &x_mean;
        let yc = &nb.target - y_mean;
        let wx = &xc * &w.view().insert_axis(ndarray::Axis(1));
        let gram = xc.t().dot(&wx);
        let xty = wx.t().dot(&yc);
        let yty = yc.iter().zip(w.iter()).map(|(&y, &wi)| wi * y * y).sum();
        Ok(WeightedMoments { gram, xty, yty, x_mean, y_mean })
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    /// Weighted mean squared residual of slopes `beta`.
    pub fn objective(&self, beta: ArrayView1<'_, F>) -> F {
        let gb = self.gram.dot(&beta);
        (self.yty - F::lit(2.0) * beta.dot(&self.xty) + beta.dot(&gb)).max(F::zero())
    }

    /// Gradient of [`Self::objective`].
    pub fn gradient(&self, beta: ArrayView1<'_, F>) -> Array1<F> {
        (self.gram.dot(&beta) - &self.xty) * F::lit(2.0)
    }

    /// Solves `(gram + ridge·I) β = xty`.
    pub fn solve(&self, ridge: F) -> Result<Array1<F>> {
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[[i, i]] += ridge;
        }
        cholesky_solve(&a, &self.xty)
    }

    pub fn intercept(&self, beta: ArrayView1<'_, F>) -> F {
        self.y_mean - self.x_mean.dot(&beta)
    }

    /// Statistics restricted to a subset of coordinates.
    pub fn restrict(&self, idx: &[usize]) -> WeightedMoments<F> {
        let gram = Array2::from_shape_fn((idx.len(), idx.len()), |(i, j)| self.gram[[idx[i], idx[j]]]);
        WeightedMoments {
            gram,
            xty: idx.iter().map(|&i| self.xty[i]).collect(),
            yty: self.yty,
            x_mean: idx.iter().map(|&i| self.x_mean[i]).collect(),
            y_mean: self.y_mean,
        }
    }
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn cholesky_solve<F: Scalar>(a: &Array2<F>, b: &Array1<F>) -> Result<Array1<F>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::invalid("shape mismatch in linear solve"));
    }
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(F::zero(), F::max);
    let tiny = F::epsilon() * F::of_usize(n.max(1)) * scale;
    let mut l = Array2::<F>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > tiny) {
            return Err(Error::SingularSystem);
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    let mut y = Array1::<F>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<F>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn power_iteration<F: Scalar>(a: &Array2<F>, max_iters: usize, tol: F) -> F {
    let n = a.nrows();
    if n == 0 {
        return F::zero();
    }
    // Deterministic start with no symmetry that could make it orthogonal to
    // the leading eigenvector by construction.
    let mut v: Array1<F> = (0..n).map(|i| F::one() + F::lit(0.1) * F::of_usize(i + 1).sqrt()).collect();
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = F::zero();
    for _ in 0..max_iters {
        let av = a.dot(&v);
        let norm = av.dot(&av).sqrt();
        if norm == F::zero() {
            return F::zero();
        }
        let next = v.dot(&av);
        v = av / norm;
        if (next - lambda).abs() <= tol * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // The Rayleigh quotient approaches from below; never exceed the trace.
    let trace = (0..n).map(|i| a[[i, i]]).sum::<F>();
    lambda.max(F::zero()).min(trace)
}

pub fn norm1<F: Scalar>(v: ArrayView1<'_, F>) -> F {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm2<F: Scalar>(v: ArrayView1<'_, F>) -> F {
    v.dot(&v).sqrt()
}

pub fn norm_inf<F: Scalar>(v: ArrayView1<'_, F>) -> F {
    v.iter().fold(F::zero(), |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_matches_known_solution() {
        let a = array![[4.0f64, 2.0], [2.0, 3.0]];
        let x = cholesky_solve(&a, &array![2.0, 1.0]).unwrap();
        // inverse is [[3, -2], [-2, 4]] / 8
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.0).abs() < 1e-15);
        assert!(matches!(cholesky_solve(&array![[1.0, 1.0], [1.0, 1.0]], &array![1.0, 1.0]), Err(Error::SingularSystem)));
    }

    #[test]
    fn power_iteration_diag() {
        let a = array![[1.0f64, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 2.0]];
        assert!((power_iteration(&a, 1000, 1e-14) - 5.0).abs() < 1e-9);
        let b = array![[2.0f64, 1.0], [1.0, 2.0]];
        assert!((power_iteration(&b, 1000, 1e-14) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn moments_objective_matches_direct_sum() {
        let nb = Neighborhood::new(
            array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [3.0, 0.0]],
            array![1.0, 2.0, 0.0, 4.0],
            array![1.0, 2.0, 0.5, 1.5],
        )
        .unwrap();
        let m = WeightedMoments::from_neighborhood(&nb).unwrap();
        let beta = array![0.3, -0.7];
        let total: f64 = nb.weight.sum();
        let direct: f64 = (0..4)
            .map(|i| {
                let xc = &nb.x.row(i) - &m.x_mean;
                let r = (nb.target[i] - m.y_mean) - xc.dot(&beta);
                nb.weight[i] / total * r * r
            })
            .sum();
        assert!((m.objective(beta.view()) - direct).abs() < 1e-12);
    }
}
