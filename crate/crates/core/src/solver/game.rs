//! Round-robin best-response game between environment players.
//!
//! Player `i` owns a predictor `w̃ᵢ`. On its turn it minimizes its own
//! environment's weighted squared error of the summed predictor
//! `w̃₋ᵢ⁺ + w̃ᵢ` subject to `‖w̃ᵢ‖∞ ≤ γ` and `‖w̃₋ᵢ⁺ + w̃ᵢ‖₁ ≤ t`.
//! The explanation is the sum of all players' predictors once no player
//! moves by more than `ε` in a full round.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::projection::project_feasible;
use crate::error::{Error, Result};
use crate::linalg::{norm1, norm2, norm_inf, power_iteration, WeightedMoments};
use crate::neighborhood::{EnvironmentSet, Neighborhood};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig<F> {
    pub k: usize,
    /// Per-player ℓ∞ bound.
    pub gamma: F,
    /// ℓ1 bound on the summed predictor.
    pub t: F,
    pub epsilon: F,
    pub max_rounds: usize,
    pub inner_max_iters: usize,
    pub inner_tol: F,
}

impl<F: Scalar> GameConfig<F> {
    pub fn new(k: usize, gamma: F, t: F) -> Result<Self> {
        let cfg = GameConfig {
            k,
            gamma,
            t,
            epsilon: F::lit(1e-6),
            max_rounds: 200,
            inner_max_iters: 500,
            inner_tol: F::lit(1e-8),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `t = γ·d`, the boundary case of `t ≥ γd`.
    pub fn with_boundary_t(k: usize, gamma: F, d: usize) -> Result<Self> {
        Self::new(k, gamma, gamma * F::of_usize(d.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("game needs k ≥ 2 players"));
        }
        let positive = |x: F| x > F::zero() && x.is_finite();
        if !positive(self.gamma) || !positive(self.t) || !positive(self.epsilon) || !positive(self.inner_tol) {
            return Err(Error::invalid("gamma, t, epsilon and inner_tol must be positive and finite"));
        }
        if self.inner_max_iters == 0 {
            return Err(Error::invalid("inner_max_iters must be positive"));
        }
        Ok(())
    }

    /// Whether `t ≥ γ·d` holds, under which the closed-form equilibrium
    /// applies.
    pub fn t_covers_box(&self, d: usize) -> bool {
        self.t >= self.gamma * F::of_usize(d)
    }
}

/// Per-player predictors and convergence bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerState<F> {
    pub w_tilde: Vec<Array1<F>>,
    pub rounds_used: usize,
    pub converged: bool,
    pub max_delta_history: Vec<F>,
    pub t_covers_box: bool,
}

impl<F: Scalar> PlayerState<F> {
    pub fn sum(&self) -> Array1<F> {
        let d = self.w_tilde.first().map_or(0, |w| w.len());
        self.w_tilde.iter().fold(Array1::zeros(d), |acc, w| acc + w)
    }
}

/// Output of [`play_game`]: the summed predictor and its intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct GameResult<F> {
    pub coefficients: Array1<F>,
    pub intercept: F,
    pub state: PlayerState<F>,
}

/// One player's convex subproblem in weighted-moment form.
#[derive(Clone, Debug)]
pub struct Player<F> {
    moments: WeightedMoments<F>,
    lipschitz: F,
}

impl<F: Scalar> Player<F> {
    pub fn new(env: &Neighborhood<F>) -> Result<Self> {
        Ok(Self::from_moments(WeightedMoments::from_neighborhood(env)?))
    }

    pub fn from_moments(moments: WeightedMoments<F>) -> Self {
        let lambda = power_iteration(&moments.gram, 1000, F::lit(1e-12));
        Player { lipschitz: F::lit(2.0) * lambda, moments }
    }

    pub fn moments(&self) -> &WeightedMoments<F> {
        &self.moments
    }

    /// Objective of the summed predictor `others + w`.
    pub fn objective(&self, others: ArrayView1<'_, F>, w: ArrayView1<'_, F>) -> F {
        self.moments.objective((&others + &w).view())
    }
}

/// Constrained best response of player `player` given the other players'
/// summed predictor. Projected gradient descent with step `1/L`,
/// `L = 2 λmax(XᵀWX)`, started from `warm_start`.
pub fn best_response<F: Scalar>(
    player_index: usize,
    player: &Player<F>,
    others_sum: ArrayView1<'_, F>,
    warm_start: ArrayView1<'_, F>,
    cfg: &GameConfig<F>,
) -> Result<Array1<F>> {
    if !others_sum.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite predictor of other players"));
    }
    let project = |v: ArrayView1<'_, F>| project_feasible(v, others_sum, cfg.gamma, cfg.t);
    let mut w = project(warm_start);
    if player.lipschitz > F::zero() {
        let step = F::one() / player.lipschitz;
        let mut value = player.objective(others_sum, w.view());
        let mut increases = 0;
        for _ in 0..cfg.inner_max_iters {
            let sum = &others_sum + &w;
            let grad = player.moments.gradient(sum.view());
            let next = project((&w - &(grad * step)).view());
            let moved = norm2((&next - &w).view());
            let next_value = player.objective(others_sum, next.view());
            increases = if next_value > value { increases + 1 } else { 0 };
            if increases >= 10 {
                return Err(Error::InnerDivergence { player: player_index });
            }
            w = next;
            value = next_value;
            if moved < cfg.inner_tol {
                break;
            }
        }
    }
    // Never worse than standing still at zero when zero is feasible.
    let zero = Array1::zeros(w.len());
    if norm1(others_sum) <= cfg.t && player.objective(others_sum, zero.view()) < player.objective(others_sum, w.view()) {
        return Ok(zero);
    }
    Ok(w)
}

/// Plays the game to a fixed point or `max_rounds`. Players move in index
/// order; a round's Δ is the largest ℓ2 move of any player in that round.
pub fn play_game<F: Scalar>(es: &EnvironmentSet<F>, cfg: &GameConfig<F>) -> Result<GameResult<F>> {
    cfg.validate()?;
    if es.k() != cfg.k {
        return Err(Error::invalid(format!("{} environments for a {}-player game", es.k(), cfg.k)));
    }
    let players = es.envs.iter().map(Player::new).collect::<Result<Vec<_>>>()?;
    let state = play_players(&players, cfg, None)?;
    let coefficients = state.sum();
    let base = WeightedMoments::from_neighborhood(&es.base)?;
    let intercept = base.intercept(coefficients.view());
    Ok(GameResult { coefficients, intercept, state })
}

/// The game loop on precomputed players, optionally resuming from `start`.
pub fn play_players<F: Scalar>(players: &[Player<F>], cfg: &GameConfig<F>, start: Option<PlayerState<F>>) -> Result<PlayerState<F>> {
    let k = players.len();
    let d = players.first().map(|p| p.moments.dim()).ok_or_else(|| Error::invalid("no players"))?;
    let mut state = start.unwrap_or_else(|| PlayerState {
        w_tilde: vec![Array1::zeros(d); k],
        rounds_used: 0,
        converged: false,
        max_delta_history: Vec::new(),
        t_covers_box: cfg.t_covers_box(d),
    });
    for _ in 0..cfg.max_rounds {
        let mut total = state.sum();
        let mut delta = F::zero();
        for (i, player) in players.iter().enumerate() {
            let others = &total - &state.w_tilde[i];
            let next = best_response(i, player, others.view(), state.w_tilde[i].view(), cfg)?;
            delta = delta.max(norm2((&next - &state.w_tilde[i]).view()));
            total = &others + &next;
            state.w_tilde[i] = next;
        }
        state.rounds_used += 1;
        state.max_delta_history.push(delta);
        if delta < cfg.epsilon {
            state.converged = true;
            break;
        }
    }
    debug_assert!(state.w_tilde.iter().all(|w| norm_inf(w.view()) <= cfg.gamma + cfg.inner_tol * F::lit(10.0)));
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use crate::neighborhood::bootstrap_environments;
    use crate::rng::RngSeed;
    use crate::solver::weighted_lsq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};

    fn env_1d(xs: &[f64], slope: f64) -> Neighborhood<f64> {
        let x = Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap();
        let y = x.column(0).mapv(|v| slope * v);
        Neighborhood::new(x, y, Array1::ones(xs.len())).unwrap()
    }

    fn grid_best(player: &Player<f64>, others: f64, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .min_by(|a, b| player.objective(array![others].view(), array![*a].view()).total_cmp(&player.objective(array![others].view(), array![*b].view())))
            .unwrap()
    }

    #[test]
    fn unconstrained_optimum_when_constraints_slack() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Array2<f64> = Array2::from_shape_fn((30, 2), |_| rng.random_range(-1.0..1.0));
        let y = x.dot(&array![0.7, -1.2]) + Array1::from_shape_fn(30, |_| rng.random_range(-0.1..0.1));
        let env = Neighborhood::new(x.clone(), y.clone(), Array1::ones(30)).unwrap();
        let others = array![0.2, 0.1];
        let cfg = GameConfig::new(2, 100.0, 1000.0).unwrap();
        let p = Player::new(&env).unwrap();
        let br = best_response(0, &p, others.view(), Array1::zeros(2).view(), &cfg).unwrap();
        let residual = &y - &x.dot(&others);
        let fit = weighted_lsq(&Neighborhood::new(x, residual, Array1::ones(30)).unwrap(), 0.0).unwrap();
        assert!((&br - &fit.coefficients).iter().all(|d| d.abs() < 1e-6), "{br} vs {}", fit.coefficients);
    }

    #[test]
    fn box_clips_one_dimensional_slope() {
        let env = env_1d(&[-1.0, -0.5, 0.0, 0.5, 1.0], 5.0);
        let p = Player::new(&env).unwrap();
        let cfg = GameConfig::new(2, 1.0, 1.0).unwrap();
        let br = best_response(0, &p, array![0.0].view(), array![0.0].view(), &cfg).unwrap();
        assert!((br[0] - 1.0).abs() < 1e-9);
        assert!((grid_best(&p, 0.0, -1.0, 1.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn opposite_push_hits_lower_bound() {
        let gamma = 0.8;
        let delta = 0.3;
        let env = env_1d(&[-2.0, -1.0, 1.0, 2.0, 0.5], -gamma - delta);
        let p = Player::new(&env).unwrap();
        let cfg = GameConfig::new(2, gamma, 2.0 * gamma).unwrap();
        let br = best_response(1, &p, array![gamma].view(), array![0.0].view(), &cfg).unwrap();
        assert!((br[0] + gamma).abs() < 1e-9, "{br}");
        let lo = -gamma;
        let hi = gamma;
        assert!((grid_best(&p, gamma, lo, hi) + gamma).abs() < 1e-4);
    }

    #[test]
    fn identical_environments_recover_linear_model() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Array2<f64> = Array2::from_shape_fn((50, 3), |_| rng.random_range(-1.0..1.0));
        let w_star = array![0.5, -0.25, 1.0];
        let y = x.dot(&w_star) + 2.0;
        let base = Neighborhood::new(x, y, Array1::ones(50)).unwrap();
        let es = EnvironmentSet { base: base.clone(), envs: vec![base.clone(), base], draws: vec![], anchor: Example::new(array![0.0, 0.0, 0.0]).unwrap() };
        let cfg = GameConfig::new(2, 10.0, 100.0).unwrap();
        let out = play_game(&es, &cfg).unwrap();
        assert!(out.state.converged);
        assert!(out.state.rounds_used <= 2, "{} rounds", out.state.rounds_used);
        for (a, b) in out.coefficients.iter().zip(w_star.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((out.intercept - 2.0).abs() < 1e-8);
    }

    #[test]
    fn opposite_signs_cancel() {
        let xs = [-1.5, -1.0, -0.5, 0.5, 1.0, 1.5];
        let base = env_1d(&xs, 1.0);
        let es = EnvironmentSet {
            base,
            envs: vec![env_1d(&xs, 0.9), env_1d(&xs, -0.6)],
            draws: vec![],
            anchor: Example::new(array![0.0]).unwrap(),
        };
        let cfg = GameConfig::new(2, 0.5, 1.0).unwrap();
        let out = play_game(&es, &cfg).unwrap();
        assert!(out.coefficients[0].abs() < 1e-6, "{}", out.coefficients);
    }

    #[test]
    fn same_signs_pick_smaller() {
        let xs = [-1.5, -1.0, -0.5, 0.5, 1.0, 1.5];
        for (a, b) in [(0.7, 0.3), (0.3, 0.7)] {
            let es = EnvironmentSet {
                base: env_1d(&xs, 0.5),
                envs: vec![env_1d(&xs, a), env_1d(&xs, b)],
                draws: vec![],
                anchor: Example::new(array![0.0]).unwrap(),
            };
            let cfg = GameConfig::new(2, 1.0, 2.0).unwrap();
            let out = play_game(&es, &cfg).unwrap();
            assert!((out.coefficients[0] - 0.3).abs() < 1e-6, "{}", out.coefficients);
        }
    }

    #[test]
    fn mismatched_k_rejected() {
        let base = env_1d(&[0.0, 1.0, 2.0], 1.0);
        let es = bootstrap_environments(base, Example::new(array![0.0]).unwrap(), 3, RngSeed(0)).unwrap();
        let cfg = GameConfig::new(2, 1.0, 1.0).unwrap();
        assert!(play_game(&es, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GameConfig::new(1, 1.0, 1.0).is_err());
        assert!(GameConfig::new(2, 0.0, 1.0).is_err());
        assert!(GameConfig::new(2, 1.0, -1.0).is_err());
        let cfg = GameConfig::with_boundary_t(2, 0.5, 4).unwrap();
        assert_eq!(cfg.t, 2.0);
        assert!(cfg.t_covers_box(4));
        assert!(!cfg.t_covers_box(5));
    }
}
