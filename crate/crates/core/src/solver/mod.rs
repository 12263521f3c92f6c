//! The environment game and its closed-form equilibrium oracles.

mod game;
mod lasso;
mod lsq;
mod oracle;
pub mod projection;

pub use game::{best_response, play_game, play_players, GameConfig, GameResult, Player, PlayerState};
pub use lasso::{default_gamma, gamma_from_fits, lasso_cd, lasso_path, select_features, sparsify, PathParams};
pub use lsq::{weighted_lsq, LinearFit};
pub use oracle::{classify, ne_oracle_multi, ne_oracle_two, two_player_rule, Branch};
pub use projection::{dykstra_projection, project_box, project_feasible, project_l1_ball, project_shifted_l1, DykstraParams};
