//! LIME and S-LIME comparators. Both consume the same neighborhoods as the
//! game so that all methods see identical black-box queries.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Attribution;
use crate::linalg::WeightedMoments;
use crate::neighborhood::{EnvironmentSet, KernelSpec, Neighborhood};
use crate::scalar::Scalar;
use crate::solver::select_features;

/// Ridge used when refitting on the selected support.
pub const DEBIAS_RIDGE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig<F> {
    /// Maximum number of nonzero coefficients.
    pub budget: usize,
    /// Kernel the neighborhood was weighted with.
    pub kernel: KernelSpec,
    /// Dense mode: ridge penalty on all features instead of lasso selection.
    pub ridge_alt: Option<F>,
}

/// Weighted sparse linear fit: lasso-path feature selection, then a weighted
/// least-squares refit on the selected support.
pub fn lime_explain<F: Scalar>(base: &Neighborhood<F>, cfg: &LimeConfig<F>) -> Result<Attribution<F>> {
    if base.is_empty() {
        return Err(Error::invalid("empty neighborhood"));
    }
    if cfg.budget == 0 {
        return Err(Error::invalid("sparsity budget must be at least one"));
    }
    let d = base.dim();
    let m = WeightedMoments::from_neighborhood(base)?;
    let constant = base.target.iter().all(|y| *y == base.target[0]);
    let (support, beta) = match cfg.ridge_alt {
        _ if constant => (Vec::new(), Array1::zeros(0)),
        Some(alpha) => {
            let beta = m.solve(alpha)?;
            ((0..d).collect::<Vec<_>>(), beta)
        }
        None => {
            let support = select_features(base, cfg.budget)?;
            let beta = if support.is_empty() { Array1::zeros(0) } else { m.restrict(&support).solve(F::lit(DEBIAS_RIDGE))? };
            (support, beta)
        }
    };
    let mut coefficients = Array1::zeros(d);
    for (slot, &j) in support.iter().enumerate() {
        coefficients[j] = beta[slot];
    }
    let intercept = m.intercept(coefficients.view());
    Ok(Attribution::new(coefficients, intercept))
}

/// Mean of independent LIME fits, one per environment.
pub fn slime_explain<F: Scalar>(es: &EnvironmentSet<F>, cfg: &LimeConfig<F>) -> Result<Attribution<F>> {
    let fits = es.envs.iter().map(|env| lime_explain(env, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(average(&fits, es.dim()))
}

pub(crate) fn average<F: Scalar>(fits: &[Attribution<F>], d: usize) -> Attribution<F> {
    let k = F::of_usize(fits.len().max(1));
    let coefficients = fits.iter().fold(Array1::zeros(d), |acc, a| acc + &a.coefficients) / k;
    let intercept = fits.iter().map(|a| a.intercept).sum::<F>() / k;
    Attribution::new(coefficients, intercept)
}
