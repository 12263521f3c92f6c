//! Euclidean projections onto the per-player feasible set
//! `{w : ‖w‖∞ ≤ γ} ∩ {w : ‖shift + w‖₁ ≤ t}`.

use ndarray::{Array1, ArrayView1};

use crate::linalg::{norm1, norm2};
use crate::scalar::Scalar;

/// Projection onto `{u : ‖u‖₁ ≤ t}` by sorting magnitudes and
/// soft-thresholding at the simplex threshold.
pub fn project_l1_ball<F: Scalar>(v: ArrayView1<'_, F>, t: F) -> Array1<F> {
    assert!(t > F::zero(), "l1 radius must be positive");
    if norm1(v) <= t {
        return v.to_owned();
    }
    let mut mags: Vec<F> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumsum = F::zero();
    let mut theta = F::zero();
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - t) / F::of_usize(j + 1);
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    v.mapv(|x| x.signum() * (x.abs() - theta).max(F::zero()))
}

pub fn project_box<F: Scalar>(v: ArrayView1<'_, F>, gamma: F) -> Array1<F> {
    v.mapv(|x| x.max(-gamma).min(gamma))
}

/// Projection onto the ℓ1 ball of radius `t` centered at `-shift`.
pub fn project_shifted_l1<F: Scalar>(v: ArrayView1<'_, F>, shift: ArrayView1<'_, F>, t: F) -> Array1<F> {
    let moved = &v + &shift;
    project_l1_ball(moved.view(), t) - shift
}

/// Exact projection onto `{w : ‖w‖∞ ≤ γ} ∩ {w : ‖shift + w‖₁ ≤ t}`.
///
/// With multiplier λ on the ℓ1 constraint, `u = shift + w` is the
/// soft-threshold of `v + shift` at λ clipped to `[shift − γ, shift + γ]`;
/// `‖u(λ)‖₁` is nonincreasing in λ, so λ is found by bisection. When the
/// intersection is empty the point of the box closest to the ball is
/// returned.
pub fn project_feasible<F: Scalar>(v: ArrayView1<'_, F>, shift: ArrayView1<'_, F>, gamma: F, t: F) -> Array1<F> {
    let at = |lambda: F| -> Array1<F> {
        Array1::from_shape_fn(v.len(), |i| {
            let z = v[i] + shift[i];
            let soft = z.signum() * (z.abs() - lambda).max(F::zero());
            soft.max(shift[i] - gamma).min(shift[i] + gamma) - shift[i]
        })
    };
    let l1 = |w: &Array1<F>| norm1((w + &shift).view());
    let free = at(F::zero());
    if l1(&free) <= t {
        return free;
    }
    let mut lo = F::zero();
    let mut hi = v.iter().zip(shift.iter()).map(|(a, b)| (*a + *b).abs()).fold(F::zero(), F::max);
    for _ in 0..200 {
        let mid = (lo + hi) * F::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if l1(&at(mid)) > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

#[derive(Clone, Copy, Debug)]
pub struct DykstraParams<F> {
    pub max_sweeps: usize,
    pub tol: F,
}

impl<F: Scalar> Default for DykstraParams<F> {
    fn default() -> Self {
        DykstraParams { max_sweeps: 10_000, tol: F::lit(1e-13) }
    }
}

/// Dykstra's alternating projections onto the box and the shifted ball.
/// Converges to the same point as [`project_feasible`], slowly when both
/// constraints are active; kept as an independent check.
pub fn dykstra_projection<F: Scalar>(
    v: ArrayView1<'_, F>,
    shift: ArrayView1<'_, F>,
    gamma: F,
    t: F,
    params: DykstraParams<F>,
) -> Array1<F> {
    let boxed = project_box(v, gamma);
    if norm1((&boxed + &shift).view()) <= t {
        return boxed;
    }
    let n = v.len();
    let mut x = v.to_owned();
    let mut p = Array1::<F>::zeros(n);
    let mut q = Array1::<F>::zeros(n);
    // The iterate can sit still for a sweep while the corrections move, so
    // convergence is judged on all three sequences.
    for _ in 0..params.max_sweeps {
        let y = project_box((&x + &p).view(), gamma);
        let next_p = &x + &p - &y;
        let next = project_shifted_l1((&y + &q).view(), shift, t);
        let next_q = &y + &q - &next;
        let moved = norm2((&next - &x).view()) + norm2((&next_p - &p).view()) + norm2((&next_q - &q).view());
        x = next;
        p = next_p;
        q = next_q;
        if moved < params.tol {
            break;
        }
    }
    x
}
