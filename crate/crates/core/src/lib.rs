//! Locally invariant explanations: game-theoretic local linear attributions
//! for black-box models, with LIME and S-LIME comparators and stability
//! metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod baselines;
pub mod bench;
pub mod blackbox;
pub mod data;
pub mod error;
pub mod explain;
pub mod linalg;
pub mod metrics;
pub mod neighborhood;
pub mod oracle_check;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use explain::{Method, Sampler};
pub use rng::RngSeed;
pub use scalar::Scalar;

pub type Dataset = data::Dataset<f64>;
pub type Example = data::Example<f64>;
pub type Label = data::Label<f64>;
pub type Attribution = explain::Attribution<f64>;
pub type Explanation = explain::Explanation<f64>;
pub type ModelAccess = explain::ModelAccess<f64>;
pub type Neighborhood = neighborhood::Neighborhood<f64>;
pub type EnvironmentSet = neighborhood::EnvironmentSet<f64>;
pub type GameConfig = solver::GameConfig<f64>;
pub type GameResult = solver::GameResult<f64>;
pub type ExplainedSet = metrics::ExplainedSet<f64>;
pub type MetricsReport = metrics::MetricsReport<f64>;
pub type RandomForest = blackbox::RandomForest<f64>;
