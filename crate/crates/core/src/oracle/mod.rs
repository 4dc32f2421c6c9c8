//! Exact evaluation of fixed joint policies by enumeration, and the error
//! bounds of the truncated estimators checked against it.

mod bounds;
mod exact;
mod gradient;
mod local;
mod monte_carlo;

use thiserror::Error;

use crate::environment::EnvError;
use crate::physics::PhysicsError;
use crate::topology::TopologyError;

pub use bounds::{BoundReport, BoundRow, Check, Part, Verifier, VerifyOptions, COMPARISON_SLACK};
pub use exact::{average_objective, enumeration_size, solve_exact, ExactSolution, SignalSolution, DEFAULT_BUDGET};
pub use gradient::{
    central_difference, exact_policy_gradient, exact_policy_gradient_with, expected_score_product, gradcheck,
    relative_error, softmax_score, GradCheck, ScoreFn,
};
pub use local::{local_q_approx, local_q_table, LocalQ, WeightingFunction};
pub use monte_carlo::{monte_carlo_q, MonteCarloOptions, MonteCarloReport, MonteCarloRow};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large: {} state-action pairs exceed the budget of {budget}", size.map_or("more than usize::MAX".to_string(), |s| s.to_string()))]
    Budget { size: Option<usize>, budget: usize },
    #[error(transparent)]
    Chain(EnvError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid weighting function: {0}")]
    Weighting(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}
