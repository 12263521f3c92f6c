//! Weighted lasso path and the feature-selection rules built on it.

use ndarray::{Array1, ArrayView1};

use crate::baselines::{lime_explain, LimeConfig};
use crate::error::{Error, Result};
use crate::linalg::{norm_inf, WeightedMoments};
use crate::neighborhood::{EnvironmentSet, KernelSpec, Neighborhood};
use crate::scalar::Scalar;

/// Points on the regularization path, from `λmax` down to `λmax · ratio`.
#[derive(Clone, Copy, Debug)]
pub struct PathParams<F> {
    pub points: usize,
    pub ratio: F,
    pub max_sweeps: usize,
    pub tol: F,
}

impl<F: Scalar> Default for PathParams<F> {
    fn default() -> Self {
        PathParams { points: 100, ratio: F::lit(1e-4), max_sweeps: 1000, tol: F::lit(1e-12) }
    }
}

/// Coordinate descent for `½ βᵀGβ − βᵀb + λ‖β‖₁`, warm-started from `beta`.
pub fn lasso_cd<F: Scalar>(m: &WeightedMoments<F>, lambda: F, beta: &mut Array1<F>, max_sweeps: usize, tol: F) {
    let d = m.dim();
    for _ in 0..max_sweeps {
        let mut max_change = F::zero();
        for j in 0..d {
            let gjj = m.gram[[j, j]];
            if gjj <= F::zero() {
                beta[j] = F::zero();
                continue;
            }
            let mut rho = m.xty[j];
            for k in 0..d {
                if k != j {
                    rho -= m.gram[[j, k]] * beta[k];
                }
            }
            let next = soft_threshold(rho, lambda) / gjj;
            max_change = max_change.max((next - beta[j]).abs());
            beta[j] = next;
        }
        if max_change <= tol {
            break;
        }
    }
}

fn soft_threshold<F: Scalar>(x: F, lambda: F) -> F {
    x.signum() * (x.abs() - lambda).max(F::zero())
}

/// Coefficient vectors along a geometric λ grid, sparsest first.
pub fn lasso_path<F: Scalar>(m: &WeightedMoments<F>, params: &PathParams<F>) -> Vec<(F, Array1<F>)> {
    let d = m.dim();
    let lambda_max = norm_inf(m.xty.view());
    let mut beta = Array1::zeros(d);
    if lambda_max <= F::zero() || params.points == 0 {
        return vec![(F::zero(), beta)];
    }
    let steps = params.points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let frac = F::of_usize(i) / F::of_usize(steps);
            let lambda = lambda_max * params.ratio.powf(frac);
            lasso_cd(m, lambda, &mut beta, params.max_sweeps, params.tol);
            (lambda, beta.clone())
        })
        .collect()
}

/// Up to `budget` features: the largest coefficients at the sparsest path
/// point with at least `budget` active, or every active feature at the end of
/// the path when fewer ever activate. Returned sorted by index.
pub fn select_features<F: Scalar>(nb: &Neighborhood<F>, budget: usize) -> Result<Vec<usize>> {
    let d = nb.dim();
    if budget >= d {
        return Ok((0..d).collect());
    }
    let m = WeightedMoments::from_neighborhood(nb)?;
    let path = lasso_path(&m, &PathParams::default());
    let active = |b: &Array1<F>| b.iter().filter(|v| **v != F::zero()).count();
    let chosen = path
        .iter()
        .find(|(_, b)| active(b) >= budget)
        .or_else(|| path.last())
        .map(|(_, b)| b.clone())
        .expect("path is nonempty");
    Ok(top_k(chosen.view(), budget))
}

fn top_k<F: Scalar>(beta: ArrayView1<'_, F>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != F::zero()).collect();
    idx.sort_by(|&a, &b| beta[b].abs().partial_cmp(&beta[a].abs()).expect("finite").then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Feature subset on which the game is played: lasso selection on the base
/// neighborhood, or every feature in dense (ridge) mode.
pub fn sparsify<F: Scalar>(es: &EnvironmentSet<F>, budget: usize, ridge_alt: Option<F>) -> Result<Vec<usize>> {
    if budget == 0 {
        return Err(Error::invalid("sparsity budget must be at least one"));
    }
    if ridge_alt.is_some() {
        return Ok((0..es.dim()).collect());
    }
    select_features(&es.base, budget)
}

/// Largest absolute LIME coefficient over all environments and features.
pub fn default_gamma<F: Scalar>(es: &EnvironmentSet<F>, budget: usize) -> Result<F> {
    let cfg = LimeConfig { budget, kernel: KernelSpec { tau: 1.0 }, ridge_alt: None };
    let fits = es.envs.iter().map(|env| lime_explain(env, &cfg).map(|a| a.coefficients)).collect::<Result<Vec<_>>>()?;
    gamma_from_fits(&fits)
}

/// `max |coefficient|` over a set of fits; zero is an error.
pub fn gamma_from_fits<F: Scalar>(fits: &[Array1<F>]) -> Result<F> {
    let gamma = fits.iter().fold(F::zero(), |g, c| g.max(norm_inf(c.view())));
    if gamma > F::zero() && gamma.is_finite() {
        Ok(gamma)
    } else {
        Err(Error::DegenerateGamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use crate::neighborhood::bootstrap_environments;
    use crate::rng::RngSeed;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};

    fn orthogonal_design(n: usize, d: usize) -> Array2<f64> {
        // Columns are ±1 Walsh-like patterns: centered and mutually orthogonal.
        Array2::from_shape_fn((n, d), |(i, j)| if (i >> j) & 1 == 0 { 1.0 } else { -1.0 })
    }

    #[test]
    fn lasso_path_starts_empty_and_ends_near_ols() {
        let x = orthogonal_design(16, 3);
        let y = x.dot(&array![1.0, -2.0, 0.5]);
        let nb = Neighborhood::new(x, y, Array1::ones(16)).unwrap();
        let m = WeightedMoments::from_neighborhood(&nb).unwrap();
        let path = lasso_path(&m, &PathParams::default());
        assert!(path[0].1.iter().all(|v| *v == 0.0));
        let last = &path.last().unwrap().1;
        assert!((last[1] + 2.0).abs() < 1e-3);
    }

    #[test]
    fn full_budget_selects_everything() {
        let nb = Neighborhood::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], array![1.0, 2.0, 3.0], array![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(select_features(&nb, 2).unwrap(), vec![0, 1]);
        assert_eq!(select_features(&nb, 5).unwrap(), vec![0, 1]);
    }

    #[test]
    fn recovers_two_relevant_of_ten() {
        let x = orthogonal_design(1024, 10);
        let mut w = Array1::zeros(10);
        w[3] = 0.8;
        w[7] = -1.1;
        let y = x.dot(&w);
        let nb = Neighborhood::new(x.clone(), y.clone(), Array1::ones(1024)).unwrap();
        let chosen = select_features(&nb, 2).unwrap();

        // Brute-force best subset of size two by residual sum of squares.
        let mut best = (f64::INFINITY, (0, 0));
        for a in 0..10 {
            for b in a + 1..10 {
                let sub = Neighborhood::new(x.select(ndarray::Axis(1), &[a, b]), y.clone(), Array1::ones(1024)).unwrap();
                let m = WeightedMoments::from_neighborhood(&sub).unwrap();
                let beta = m.solve(0.0).unwrap();
                let rss = m.objective(beta.view());
                if rss < best.0 {
                    best = (rss, (a, b));
                }
            }
        }
        assert_eq!(chosen, vec![best.1 .0, best.1 .1]);
        assert_eq!(chosen, vec![3, 7]);
    }

    #[test]
    fn dense_mode_returns_all() {
        let x = orthogonal_design(8, 3);
        let nb = Neighborhood::new(x.clone(), x.column(0).to_owned(), Array1::ones(8)).unwrap();
        let es = bootstrap_environments(nb, Example::new(array![0.0, 0.0, 0.0]).unwrap(), 2, RngSeed(0)).unwrap();
        assert_eq!(sparsify(&es, 1, Some(1e-3)).unwrap(), vec![0, 1, 2]);
        assert_eq!(sparsify(&es, 1, None).unwrap(), vec![0]);
    }

    #[test]
    fn gamma_from_linear_fixture() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Array2<f64> = Array2::from_shape_fn((60, 3), |_| rng.random_range(-1.0..1.0));
        let w = array![0.4, -1.5, 0.9];
        let nb = Neighborhood::new(x.clone(), x.dot(&w), Array1::ones(60)).unwrap();
        let es = bootstrap_environments(nb, Example::new(array![0.0, 0.0, 0.0]).unwrap(), 2, RngSeed(4)).unwrap();
        let gamma = default_gamma(&es, 3).unwrap();
        assert!((gamma - 1.5).abs() <= 0.15, "{gamma}");
    }

    #[test]
    fn gamma_is_max_absolute() {
        assert_eq!(gamma_from_fits(&[array![0.2, -0.5], array![0.4, 0.1]]).unwrap(), 0.5);
    }

    #[test]
    fn constant_model_has_no_gamma() {
        let x = orthogonal_design(8, 2);
        let nb = Neighborhood::new(x, Array1::from_elem(8, 3.0), Array1::ones(8)).unwrap();
        let es = bootstrap_environments(nb, Example::new(array![0.0, 0.0]).unwrap(), 2, RngSeed(1)).unwrap();
        assert!(matches!(default_gamma(&es, 2), Err(Error::DegenerateGamma)));
    }
}
