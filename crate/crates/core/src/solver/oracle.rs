//! Closed-form equilibria of the game under independent features and
//! `t ≥ γd`.
//!
//! With two players the equilibrium attribution for a feature is zero when
//! the players' unconstrained least-squares slopes disagree in sign, and the
//! smaller-magnitude slope otherwise. With more players the median (odd `k`)
//! or the two-player rule on the middle pair (even `k`) applies.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scalar two-player rule. Ties in magnitude resolve to `a`.
pub fn two_player_rule<F: Scalar>(a: F, b: F) -> F {
    if a * b < F::zero() {
        F::zero()
    } else if b.abs() >= a.abs() {
        a
    } else {
        b
    }
}

pub fn ne_oracle_two<F: Scalar>(w1_star: ArrayView1<'_, F>, w2_star: ArrayView1<'_, F>, gamma: F) -> Result<Array1<F>> {
    if w1_star.len() != w2_star.len() {
        return Err(Error::invalid("oracle inputs differ in length"));
    }
    if !(gamma > F::zero()) {
        return Err(Error::invalid("gamma must be positive"));
    }
    Ok(w1_star.iter().zip(w2_star.iter()).map(|(&a, &b)| two_player_rule(a, b)).collect())
}

/// Per feature: median for odd `k`, two-player rule on the middle pair for
/// even `k`.
pub fn ne_oracle_multi<F: Scalar>(w_stars: &[Array1<F>], gamma: F) -> Result<Array1<F>> {
    let k = w_stars.len();
    if k < 2 {
        return Err(Error::invalid("need at least two environments"));
    }
    let d = w_stars[0].len();
    if w_stars.iter().any(|w| w.len() != d) {
        return Err(Error::invalid("oracle inputs differ in length"));
    }
    if k == 2 {
        return ne_oracle_two(w_stars[0].view(), w_stars[1].view(), gamma);
    }
    if !(gamma > F::zero()) {
        return Err(Error::invalid("gamma must be positive"));
    }
    Ok((0..d)
        .map(|j| {
            let mut col: Vec<F> = w_stars.iter().map(|w| w[j]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            if k % 2 == 1 {
                col[k / 2]
            } else {
                two_player_rule(col[k / 2 - 1], col[k / 2])
            }
        })
        .collect())
}

/// Which branch of the closed form a coordinate falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Strictly opposite signs: eliminated to zero.
    OppositeSign,
    /// Same sign (or a zero): the smaller magnitude survives.
    SameSign,
    /// Same sign, but a magnitude reaches γ, so the smaller-magnitude
    /// player cannot be outbid by a bounded partner and the closed form
    /// does not apply.
    OutOfRegime,
}

/// Branch of each coordinate for the decisive pair of slopes: the two
/// players for `k = 2`, the middle pair for even `k`, the median and its
/// neighbors for odd `k`.
pub fn classify<F: Scalar>(w_stars: &[Array1<F>], gamma: F) -> Vec<Branch> {
    let k = w_stars.len();
    let d = w_stars.first().map_or(0, |w| w.len());
    (0..d)
        .map(|j| {
            let mut col: Vec<F> = w_stars.iter().map(|w| w[j]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            if k % 2 == 1 {
                return if col[k / 2].abs() < gamma { Branch::SameSign } else { Branch::OutOfRegime };
            }
            let (a, b) = (col[k / 2 - 1], col[k / 2]);
            if a * b < F::zero() {
                Branch::OppositeSign
            } else if a.abs().max(b.abs()) < gamma {
                Branch::SameSign
            } else {
                Branch::OutOfRegime
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_player_examples() {
        let w = ne_oracle_two(array![2.0, -1.0].view(), array![1.0, 1.0].view(), 3.0).unwrap();
        assert_eq!(w, array![1.0, 0.0]);
        let v = array![0.3, -0.2, 1.7];
        assert_eq!(ne_oracle_two(v.view(), v.view(), 1.0).unwrap(), v);
        let z = ne_oracle_two(array![0.0, 3.0].view(), array![5.0, 0.0].view(), 1.0).unwrap();
        assert_eq!(z, array![0.0, 0.0]);
    }

    #[test]
    fn tie_goes_to_first() {
        // Same magnitude and sign: either entry, but the first is returned.
        let a = 0.5f64;
        let b = 0.5f64;
        assert_eq!(two_player_rule(a, b).to_bits(), a.to_bits());
        assert_eq!(two_player_rule(-0.0f64, 0.0).to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn multi_examples() {
        let m = ne_oracle_multi(&[array![-1.0], array![2.0], array![5.0]], 10.0).unwrap();
        assert_eq!(m, array![2.0]);
        let e = ne_oracle_multi(&[array![-3.0], array![-1.0], array![2.0], array![4.0]], 10.0).unwrap();
        assert_eq!(e, array![0.0]);
        let s = ne_oracle_multi(&[array![1.0], array![3.0], array![2.0], array![5.0]], 10.0).unwrap();
        assert_eq!(s, array![2.0]);
        let pair = [array![0.4, -0.3], array![0.1, 0.8]];
        assert_eq!(ne_oracle_multi(&pair, 1.0).unwrap(), ne_oracle_two(pair[0].view(), pair[1].view(), 1.0).unwrap());
    }

    #[test]
    fn regime_classification() {
        let b = classify(&[array![0.5, 0.5, 2.0], array![-0.5, 0.3, 1.0]], 1.0);
        assert_eq!(b, vec![Branch::OppositeSign, Branch::SameSign, Branch::OutOfRegime]);
    }
}
