use super::{
    epsilon_schedule, estimate_gradient, evaluate_policy, lqr_cost, lqr_grad, optimal_policy, EstimatorConfig,
    LqrConstants, LqrError, LtiSystem, PolicyVec, ScheduleInputs,
};
use crate::linalg::{Matrix, DEFAULT_TOL};
use crate::optimize::{GradOracle, OracleError};

/// Factor applied to the largest observed estimation error.
pub const CALIBRATION_SAFETY: f64 = 1.5;

/// Iteration indices at and above this value are reserved for calibration,
/// so calibration draws never reuse a run's random streams.
pub const CALIBRATION_STREAM: u64 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    Exact,
    ModelFree(EstimatorConfig),
}

/// How the noisy loop's error bound `ε_t` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    /// High-probability bound evaluated from the regularity constants.
    Theory {
        delta: f64,
    },
    /// Worst observed `‖∇̂J − ∇J‖_F` over `calls` estimates at each
    /// calibration gain, times [`CALIBRATION_SAFETY`].
    Empirical {
        calls: usize,
    },
    Manual(f64),
}

/// LQR cost over `vec(K)`, the column-major flattening of the gain.
#[derive(Debug, Clone)]
pub struct LqrOracle {
    sys: LtiSystem,
    shape: PolicyVec,
    constants: LqrConstants,
    optimal_cost: f64,
    optimal_gain: Matrix,
    /// `R + BᵀP*B`, the curvature of the cost-difference identity.
    gap_weight: Matrix,
    mode: GradientMode,
    smoothness_override: Option<f64>,
}

impl LqrOracle {
    pub fn new(sys: LtiSystem, constants: LqrConstants, mode: GradientMode) -> Result<Self, LqrError> {
        if let GradientMode::ModelFree(cfg) = &mode {
            cfg.validate()?;
        }
        let opt = optimal_policy(&sys, DEFAULT_TOL)?;
        let gap_weight = sys.r() + sys.b().transpose() * &opt.p * sys.b();
        Ok(Self {
            gap_weight,
            shape: PolicyVec { m: sys.m(), n: sys.n() },
            sys,
            constants,
            optimal_cost: opt.cost,
            optimal_gain: opt.gain,
            mode,
            smoothness_override: None,
        })
    }

    /// Constants from the system matrices with `J̄ = 4·J(K₀)` unless given.
    pub fn from_initial_gain(
        sys: LtiSystem,
        k0: &Matrix,
        j_bar: Option<f64>,
        mode: GradientMode,
    ) -> Result<Self, LqrError> {
        let constants = LqrConstants::from_system(&sys, k0, j_bar)?;
        Self::new(sys, constants, mode)
    }

    /// Replaces the reported smoothness constant, e.g. with a tighter local estimate.
    pub fn with_smoothness(mut self, smoothness: f64) -> Self {
        self.smoothness_override = Some(smoothness);
        self
    }

    pub fn system(&self) -> &LtiSystem {
        &self.sys
    }
    pub fn constants(&self) -> &LqrConstants {
        &self.constants
    }
    pub fn shape(&self) -> PolicyVec {
        self.shape
    }
    pub fn mode(&self) -> &GradientMode {
        &self.mode
    }
    pub fn optimal_gain(&self) -> &Matrix {
        &self.optimal_gain
    }

    fn check(&self, x: &[f64]) -> Result<Matrix, OracleError> {
        if x.len() != self.shape.dim() {
            return Err(OracleError::OutOfDomain(format!(
                "expected a vector of length {}, got {}",
                self.shape.dim(),
                x.len()
            )));
        }
        Ok(self.shape.to_matrix(x))
    }

    /// Model-free estimate at `x` drawn from iteration `t`'s streams.
    pub fn estimate(&self, x: &[f64], t: u64) -> Result<Vec<f64>, OracleError> {
        let k = self.check(x)?;
        match &self.mode {
            GradientMode::Exact => Ok(self.shape.to_vec(&lqr_grad(&self.sys, &k)?)),
            GradientMode::ModelFree(cfg) => Ok(self.shape.to_vec(&estimate_gradient(&self.sys, &k, cfg, t)?)),
        }
    }

    /// Largest estimation error over `calls` estimates at each gain, using
    /// streams disjoint from any run.
    pub fn max_estimation_error(&self, gains: &[Vec<f64>], calls: usize) -> Result<f64, OracleError> {
        let mut worst: f64 = 0.0;
        for (j, x) in gains.iter().enumerate() {
            let exact = self.grad(x)?;
            for c in 0..calls {
                let t = CALIBRATION_STREAM + (j * calls + c) as u64;
                let est = self.estimate(x, t)?;
                let err = est.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(err);
            }
        }
        Ok(worst)
    }

    /// Constant `ε` for a run of `iters` steps. Empirical calibration visits
    /// `calibration_gains`, typically points along the expected path.
    pub fn noise_level(
        &self,
        mode: NoiseMode,
        iters: usize,
        calibration_gains: &[Vec<f64>],
    ) -> Result<f64, OracleError> {
        match (mode, &self.mode) {
            (NoiseMode::Manual(eps), _) => Ok(eps),
            (_, GradientMode::Exact) => Ok(0.0),
            (NoiseMode::Theory { delta }, GradientMode::ModelFree(cfg)) => {
                let s = ScheduleInputs {
                    m: self.shape.m,
                    n: self.shape.n,
                    radius: cfg.radius,
                    trajectories: cfg.trajectories,
                    horizon: cfg.horizon,
                    iterations: iters.max(1),
                    delta,
                    trace_sigma: self.sys.sigma_w().trace(),
                };
                Ok(epsilon_schedule(&self.constants, &s).total())
            }
            (NoiseMode::Empirical { calls }, GradientMode::ModelFree(_)) => {
                Ok(CALIBRATION_SAFETY * self.max_estimation_error(calibration_gains, calls)?)
            }
        }
    }
}

impl GradOracle for LqrOracle {
    fn dim(&self) -> usize {
        self.shape.dim()
    }
    fn smoothness(&self) -> f64 {
        self.smoothness_override.unwrap_or(self.constants.smoothness)
    }
    fn pl_constant(&self) -> Option<f64> {
        Some(self.constants.mu)
    }
    fn grad_bound(&self) -> Option<f64> {
        Some(self.constants.grad_bound)
    }
    fn value(&self, x: &[f64]) -> Result<f64, OracleError> {
        Ok(lqr_cost(&self.sys, &self.check(x)?)?)
    }
    fn optimal_value(&self) -> Option<f64> {
        Some(self.optimal_cost)
    }
    /// `J(K) − J* = tr(Σ_K ΔᵀWΔ)` with `Δ = K − K*`, free of cancellation.
    fn gap(&self, x: &[f64]) -> Result<f64, OracleError> {
        let k = self.check(x)?;
        let ev = evaluate_policy(&self.sys, &k)?;
        let delta = k - &self.optimal_gain;
        Ok((ev.sigma * delta.transpose() * &self.gap_weight * delta).trace())
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        Ok(self.shape.to_vec(&lqr_grad(&self.sys, &self.check(x)?)?))
    }
    fn noisy_grad(&self, x: &[f64], t: usize) -> Result<Vec<f64>, OracleError> {
        self.estimate(x, t as u64)
    }
}
