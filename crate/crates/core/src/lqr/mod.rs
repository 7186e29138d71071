//! Linear-quadratic regulation as a first-order oracle.
//!
//! Exact costs and gradients come from Lyapunov solves on the closed loop;
//! the model-free path estimates gradients from simulated trajectories with
//! randomly perturbed gains.

mod constants;
mod cost;
mod estimator;
mod oracle;
mod system;

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::optimize::OracleError;

pub use constants::LqrConstants;
pub use cost::{
    closed_loop, evaluate_policy, lqr_cost, lqr_cost_and_grad, lqr_grad, optimal_policy, OptimalPolicy, PolicyEval,
    PolicyVec, COST_DUALITY_TOL,
};
pub use estimator::{
    epsilon_schedule, estimate_gradient, gradient_samples, rollout, rollout_cost, sample_direction, trajectory_rng,
    EpsilonTerms, EstimatorConfig, Rollout, ScheduleInputs, BLOWUP_NORM,
};
pub use oracle::{GradientMode, LqrOracle, NoiseMode, CALIBRATION_SAFETY, CALIBRATION_STREAM};
pub use system::{random_stable_instance, random_stable_instance_with, LtiSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("gain is not stabilizing (closed-loop spectral radius {rho})")]
    Unstabilizing { rho: f64 },
    #[error("cost closed forms disagree: tr(PΣ_w) = {primal:e}, tr((Q+KᵀRK)Σ_K) = {dual:e}")]
    CrossCheck { primal: f64, dual: f64 },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("state norm {norm:e} at step {step}: played gain is destabilizing")]
    Blowup { step: usize, norm: f64 },
}

impl From<LqrError> for OracleError {
    fn from(e: LqrError) -> Self {
        match e {
            LqrError::Unstabilizing { rho } => OracleError::Unstabilizing { rho },
            LqrError::Blowup { .. } | LqrError::InvalidSystem(_) => OracleError::OutOfDomain(e.to_string()),
            other => OracleError::Numerical(other.to_string()),
        }
    }
}
