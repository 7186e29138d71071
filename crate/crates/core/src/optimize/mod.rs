//! Gradient descent over a bit-limited channel.
//!
//! A worker evaluates gradients and sends only a quantized innovation; a
//! server integrates the decoded innovations and moves the iterate. Both ends
//! run the same range recursion, so the quantizer range never has to be sent.

mod baseline;
pub mod bounds;
mod engine;
pub mod invariants;
mod trace;

use thiserror::Error;

use crate::quantize::QuantizeError;

pub use baseline::{gd_static_quantized, gd_unquantized};
pub use engine::{
    aqgd_step, naqgd_step, run, Endpoint, OptState, OverflowPolicy, RunConfig, RunError, StepReport, PRECISION_FLOOR,
};
pub use invariants::{potential_monotonicity, MonotonicityReport};
pub use trace::{read_csv, CsvError, LoopKind, RunTrace, TraceRecord, CSV_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("policy is not stabilizing (closed-loop spectral radius {rho})")]
    Unstabilizing { rho: f64 },
    #[error("point outside the oracle's domain: {0}")]
    OutOfDomain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// First-order access to an objective with declared regularity constants.
pub trait GradOracle {
    fn dim(&self) -> usize;

    /// Lipschitz constant of the gradient on the region the iterates visit.
    fn smoothness(&self) -> f64;

    /// Gradient-domination constant μ with `‖∇f‖² ≥ 2μ(f − f*)`, if known.
    fn pl_constant(&self) -> Option<f64> {
        None
    }

    fn grad_bound(&self) -> Option<f64> {
        None
    }

    fn value(&self, x: &[f64]) -> Result<f64, OracleError>;

    fn optimal_value(&self) -> Option<f64> {
        None
    }

    /// `f(x) − f*`; override when a cancellation-free form exists.
    fn gap(&self, x: &[f64]) -> Result<f64, OracleError> {
        Ok(self.value(x)? - self.optimal_value().unwrap_or(0.0))
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, OracleError>;

    /// Possibly inexact gradient used by the noisy loop at iteration `t`.
    fn noisy_grad(&self, x: &[f64], _t: usize) -> Result<Vec<f64>, OracleError> {
        self.grad(x)
    }
}

impl<O: GradOracle + ?Sized> GradOracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn smoothness(&self) -> f64 {
        (**self).smoothness()
    }
    fn pl_constant(&self) -> Option<f64> {
        (**self).pl_constant()
    }
    fn grad_bound(&self) -> Option<f64> {
        (**self).grad_bound()
    }
    fn value(&self, x: &[f64]) -> Result<f64, OracleError> {
        (**self).value(x)
    }
    fn optimal_value(&self) -> Option<f64> {
        (**self).optimal_value()
    }
    fn gap(&self, x: &[f64]) -> Result<f64, OracleError> {
        (**self).gap(x)
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        (**self).grad(x)
    }
    fn noisy_grad(&self, x: &[f64], t: usize) -> Result<Vec<f64>, OracleError> {
        (**self).noisy_grad(x, t)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("step {t}: innovation norm {norm:e} exceeds range {range:e}")]
    Overflow { t: usize, norm: f64, range: f64 },
    #[error("step {t}: worker and server states diverged")]
    Asymmetric { t: usize },
    #[error("step {t}: gap {gap:e} exceeds divergence limit ({initial:e} initially)")]
    Diverged { t: usize, gap: f64, initial: f64 },
    #[error("noise schedule too short: need {need} entries, got {got}")]
    ScheduleTooShort { need: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    crate::quantize::euclidean_norm(x)
}
