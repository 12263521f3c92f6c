use linex_core::data::Example;
use linex_core::linalg::norm1;
use linex_core::neighborhood::{bootstrap_environments, EnvironmentSet, Neighborhood};
use linex_core::solver::{best_response, play_game, play_players, GameConfig, Player};
use linex_core::RngSeed;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ensure;

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gaussian inputs, a random linear target plus `noise`-scaled Gaussian
/// noise and random positive weights, split into `k` bootstrap
/// environments. Also returns the true slopes.
pub fn random_environments(seed: u64, n: usize, d: usize, k: usize, noise: f64) -> (EnvironmentSet<f64>, Array1<f64>) {
    let mut rng = RngSeed(seed).rng();
    let x = Array2::from_shape_fn((n, d), |_| normal(&mut rng));
    let w = Array1::from_shape_fn(d, |_| rng.random_range(-2.0..2.0));
    let y = x.dot(&w) + Array1::from_shape_fn(n, |_| noise * normal(&mut rng));
    let weight = Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0));
    let base = Neighborhood::new(x, y, weight).unwrap();
    let es = bootstrap_environments(base, Example::new(Array1::zeros(d)).unwrap(), k, RngSeed(seed).derive(7)).unwrap();
    (es, w)
}

pub fn tight(k: usize, gamma: f64, t: f64) -> GameConfig<f64> {
    let mut cfg = GameConfig::new(k, gamma, t).unwrap();
    cfg.max_rounds = 5_000;
    cfg.epsilon = 1e-10;
    cfg.inner_max_iters = 20_000;
    cfg.inner_tol = 1e-13;
    cfg
}

fn grid_minimum(player: &Player<f64>, others: &Array1<f64>, gamma: f64, t: f64, steps: usize) -> f64 {
    let d = others.len();
    let axis = |i: usize| -gamma + 2.0 * gamma * i as f64 / steps as f64;
    let mut best = f64::INFINITY;
    for flat in 0..(steps + 1).pow(d as u32) {
        let w = Array1::from_shape_fn(d, |j| axis(flat / (steps + 1).pow(j as u32) % (steps + 1)));
        if norm1((&w + others).view()) <= t {
            best = best.min(player.objective(others.view(), w.view()));
        }
    }
    best
}

/// Every player's predictor stays in the box and the sum in the ℓ1 ball,
/// under the default solver limits.
pub fn feasibility(seed: u64, d: usize, k: usize, gamma: f64, t_frac: f64) -> Result<(), String> {
    let (es, _) = random_environments(seed, 30, d, k, 0.5);
    let t = t_frac * gamma * d as f64;
    let out = play_game(&es, &GameConfig::new(k, gamma, t).unwrap()).map_err(|e| e.to_string())?;
    for w in &out.state.w_tilde {
        ensure(w.iter().all(|v| v.abs() <= gamma + 1e-9), || format!("{w} leaves the box γ = {gamma}"))?;
    }
    let l1 = norm1(out.coefficients.view());
    ensure(l1 <= t + 1e-9, || format!("‖sum‖₁ = {l1} > t = {t}"))
}

/// A best response is at least as good as the best feasible grid point, up
/// to relative 1e-6. Only for d ≤ 2.
pub fn best_response_optimality(seed: u64, d: usize, gamma: f64, t_frac: f64) -> Result<(), String> {
    assert!(d <= 2);
    let (es, _) = random_environments(seed, 25, d, 2, 0.5);
    let t = t_frac * gamma * d as f64;
    let cfg = tight(2, gamma, t);
    let player = Player::new(&es.envs[0]).unwrap();
    let mut rng = RngSeed(seed).derive(1).rng();
    let others = Array1::from_shape_fn(d, |_| rng.random_range(-gamma..gamma) * t_frac.min(1.0) / d as f64);
    let w = best_response(0, &player, others.view(), Array1::zeros(d).view(), &cfg).map_err(|e| e.to_string())?;
    let got = player.objective(others.view(), w.view());
    let grid = grid_minimum(&player, &others, gamma, t, if d == 1 { 200_000 } else { 600 });
    ensure(got <= grid * (1.0 + 1e-6) + 1e-12, || format!("best response {got} vs grid {grid}"))
}

/// After convergence one more round moves the summed predictor by < 1e-8.
/// Returns `Ok(false)` when the game did not converge (nothing to check).
pub fn fixed_point(seed: u64, d: usize, k: usize, gamma: f64) -> Result<bool, String> {
    let (es, _) = random_environments(seed, 30, d, k, 0.5);
    let cfg = tight(k, gamma, gamma * d as f64);
    let players: Vec<Player<f64>> = es.envs.iter().map(|e| Player::new(e).unwrap()).collect();
    let state = play_players(&players, &cfg, None).map_err(|e| e.to_string())?;
    if !state.converged {
        return Ok(false);
    }
    let before = state.sum();
    let again = play_players(&players, &GameConfig { max_rounds: 1, ..cfg }, Some(state)).map_err(|e| e.to_string())?;
    let moved = (&again.sum() - &before).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(moved < 1e-8, || format!("one more round moved the sum by {moved}"))?;
    Ok(true)
}

/// Noiseless linear targets with slack constraints: the summed predictor is
/// the true slope vector and the intercept is 0, within 1e-8.
pub fn noiseless_recovery(seed: u64, d: usize, k: usize) -> Result<(), String> {
    let (es, truth) = random_environments(seed, 40, d, k, 0.0);
    let out = play_game(&es, &tight(k, 10.0, 100.0)).map_err(|e| e.to_string())?;
    ensure(out.state.converged, || "game did not converge".into())?;
    let err = (&out.coefficients - &truth).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(err < 1e-8, || format!("{} vs {truth}", out.coefficients))?;
    ensure(out.intercept.abs() < 1e-8, || format!("intercept {}", out.intercept))
}
