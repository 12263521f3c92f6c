use ndarray::Array1;

use crate::error::Result;
use crate::linalg::WeightedMoments;
use crate::neighborhood::Neighborhood;
use crate::scalar::Scalar;

/// Slopes plus intercept of a local linear model.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit<F> {
    pub coefficients: Array1<F>,
    pub intercept: F,
}

/// Weighted least squares on centered data. `ridge` is added to the
/// diagonal of the weight-normalized normal matrix.
pub fn weighted_lsq<F: Scalar>(env: &Neighborhood<F>, ridge: F) -> Result<LinearFit<F>> {
    let m = WeightedMoments::from_neighborhood(env)?;
    let coefficients = m.solve(ridge)?;
    let intercept = m.intercept(coefficients.view());
    Ok(LinearFit { coefficients, intercept })
}
