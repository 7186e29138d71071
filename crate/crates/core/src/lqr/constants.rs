use super::{lqr_cost, LqrError, LtiSystem};
use crate::linalg::{op_norm, sym_eig_bounds, Matrix};

/// Regularity constants of the LQR cost on the sublevel set `{K : J(K) ≤ J̄}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrConstants {
    /// `β₀I ⪯ Q, R`.
    pub beta0: f64,
    /// `Q, R ⪯ β₁I`.
    pub beta1: f64,
    /// `Σ_w ⪰ σ²I`.
    pub sigma_sq: f64,
    /// `‖B‖ ≤ ψ`, `ψ ≥ 1`.
    pub psi: f64,
    /// Sublevel bound `J̄`.
    pub j_bar: f64,
    pub n: usize,
    pub zeta: f64,
    pub eta: f64,
    /// Gradient bound on the sublevel set.
    pub grad_bound: f64,
    /// Local smoothness constant.
    pub smoothness: f64,
    /// Radius of the local smoothness / Lipschitz neighbourhood.
    pub radius: f64,
    /// Local Lipschitz constant of the cost.
    pub lipschitz: f64,
    /// Gradient-domination constant.
    pub mu: f64,
}

impl LqrConstants {
    pub fn new(beta0: f64, beta1: f64, sigma_sq: f64, psi: f64, j_bar: f64, n: usize) -> Self {
        let zeta = (j_bar / (beta0 * sigma_sq)).sqrt();
        let eta = 1.0 - 1.0 / (2.0 * zeta * zeta);
        let grad_bound = 2.0 * j_bar / (beta0 * sigma_sq) * ((sigma_sq + psi * psi * j_bar) * j_bar).sqrt();
        let smoothness = 112.0 * (n as f64).sqrt() * j_bar * psi * psi * zeta.powi(8) / beta0;
        let radius = 1.0 / (psi * zeta.powi(3));
        let lipschitz = 4.0 * psi * j_bar * zeta.powi(7) / beta0;
        let mu = 2.0 * j_bar / zeta.powi(4);
        Self {
            beta0,
            beta1,
            sigma_sq,
            psi,
            j_bar,
            n,
            zeta,
            eta,
            grad_bound,
            smoothness,
            radius,
            lipschitz,
            mu,
        }
    }

    /// Reads `β₀, β₁, σ², ψ` off the matrices; `J̄` defaults to `4·J(K₀)`.
    pub fn from_system(sys: &LtiSystem, k0: &Matrix, j_bar: Option<f64>) -> Result<Self, LqrError> {
        let (q_lo, q_hi) = sym_eig_bounds(sys.q())?;
        let (r_lo, r_hi) = sym_eig_bounds(sys.r())?;
        let (s_lo, _) = sym_eig_bounds(sys.sigma_w())?;
        let beta1 = q_hi.max(r_hi);
        if beta1 > 1.0 {
            log::warn!("beta1 = {beta1} exceeds 1; constants computed from the unnormalized cost matrices");
        }
        let j_bar = match j_bar {
            Some(j) => j,
            None => 4.0 * lqr_cost(sys, k0)?,
        };
        Ok(Self::new(
            q_lo.min(r_lo),
            beta1,
            s_lo,
            op_norm(sys.b()).max(1.0),
            j_bar,
            sys.n(),
        ))
    }

    /// `‖P_K‖ ≤ 2β₁ζ⁴/(1−η)` on the sublevel set.
    pub fn cost_to_go_bound(&self) -> f64 {
        2.0 * self.beta1 * self.zeta.powi(4) / (1.0 - self.eta)
    }

    /// `‖x_k‖ ≤ ζ/(1−η)·max_s ‖w_s‖` for rollouts from the origin.
    pub fn state_gain(&self) -> f64 {
        self.zeta / (1.0 - self.eta)
    }

    /// Largest perturbation radius the estimator analysis admits: `min{J̄/(2Ḡ), D}`.
    pub fn max_smoothing_radius(&self) -> f64 {
        (self.j_bar / (2.0 * self.lipschitz)).min(self.radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn worked_example() {
        let c = LqrConstants::new(1.0, 1.0, 1.0, 1.0, 4.0, 4);
        assert_eq!(c.zeta, 2.0);
        assert_eq!(c.eta, 0.875);
        assert_eq!(c.mu, 0.5);
        assert_eq!(c.radius, 0.125);
        assert_eq!(c.lipschitz, 2048.0);
        assert_relative_eq!(c.grad_bound, 8.0 * 20f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c.grad_bound, 35.7771, epsilon = 1e-4);
        assert_eq!(c.smoothness, 229_376.0);
    }

    #[test]
    fn zeta_is_at_least_one_when_the_sublevel_set_is_feasible() {
        // J(K) ≥ tr(Q Σ_w) ≥ β₀σ²·n, so any feasible J̄ gives ζ ≥ 1.
        for j in [1.0, 2.5, 40.0] {
            let c = LqrConstants::new(1.0, 1.0, 1.0, 1.0, j, 1);
            assert!(c.zeta >= 1.0 && c.eta > 0.0 && c.eta < 1.0);
        }
    }
}
