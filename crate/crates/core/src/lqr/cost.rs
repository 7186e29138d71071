use super::{LqrError, LtiSystem};
use crate::linalg::{
    solve_dare, solve_discrete_lyapunov, spectral_radius, LyapunovForm, Matrix, DEFAULT_TOL, SCHUR_MARGIN,
};

/// Relative agreement required between the two closed forms of the cost.
pub const COST_DUALITY_TOL: f64 = 1e-8;

/// Everything one policy evaluation produces; reused by cost and gradient.
#[derive(Debug, Clone)]
pub struct PolicyEval {
    pub cost: f64,
    /// Cost-to-go `P_K = Q + KᵀRK + (A+BK)ᵀP_K(A+BK)`.
    pub p: Matrix,
    /// Stationary covariance `Σ_K = Σ_w + (A+BK)Σ_K(A+BK)ᵀ`.
    pub sigma: Matrix,
    pub rho: f64,
}

pub fn closed_loop(sys: &LtiSystem, k: &Matrix) -> Matrix {
    sys.a() + sys.b() * k
}

fn check_gain(sys: &LtiSystem, k: &Matrix) -> Result<(), LqrError> {
    if k.nrows() != sys.m() || k.ncols() != sys.n() {
        return Err(LqrError::InvalidSystem(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            sys.m(),
            sys.n()
        )));
    }
    Ok(())
}

pub fn evaluate_policy(sys: &LtiSystem, k: &Matrix) -> Result<PolicyEval, LqrError> {
    check_gain(sys, k)?;
    let cl = closed_loop(sys, k);
    let rho = spectral_radius(&cl)?;
    if rho >= 1.0 - SCHUR_MARGIN {
        return Err(LqrError::Unstabilizing { rho });
    }
    let stage = sys.q() + k.transpose() * sys.r() * k;
    let p = solve_discrete_lyapunov(&cl, &stage, LyapunovForm::Observability, DEFAULT_TOL)?.x;
    let sigma = solve_discrete_lyapunov(&cl, sys.sigma_w(), LyapunovForm::Controllability, DEFAULT_TOL)?.x;
    let cost = (&p * sys.sigma_w()).trace();
    let dual = (&stage * &sigma).trace();
    if (cost - dual).abs() > COST_DUALITY_TOL * cost.abs().max(dual.abs()) {
        return Err(LqrError::CrossCheck { primal: cost, dual });
    }
    Ok(PolicyEval { cost, p, sigma, rho })
}

/// `J(K) = tr(P_K Σ_w)`.
pub fn lqr_cost(sys: &LtiSystem, k: &Matrix) -> Result<f64, LqrError> {
    Ok(evaluate_policy(sys, k)?.cost)
}

fn grad_from(sys: &LtiSystem, k: &Matrix, ev: &PolicyEval) -> Matrix {
    let bt_p = sys.b().transpose() * &ev.p;
    let lhs = (sys.r() + &bt_p * sys.b()) * k + bt_p * sys.a();
    lhs * &ev.sigma * 2.0
}

/// `∇J(K) = 2((R + BᵀP_KB)K + BᵀP_KA)Σ_K`.
pub fn lqr_grad(sys: &LtiSystem, k: &Matrix) -> Result<Matrix, LqrError> {
    let ev = evaluate_policy(sys, k)?;
    Ok(grad_from(sys, k, &ev))
}

pub fn lqr_cost_and_grad(sys: &LtiSystem, k: &Matrix) -> Result<(f64, Matrix), LqrError> {
    let ev = evaluate_policy(sys, k)?;
    let g = grad_from(sys, k, &ev);
    Ok((ev.cost, g))
}

#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    pub p: Matrix,
    pub gain: Matrix,
    pub cost: f64,
}

/// Riccati solution with `J* = tr(P*Σ_w)`.
pub fn optimal_policy(sys: &LtiSystem, tol: f64) -> Result<OptimalPolicy, LqrError> {
    let sol = solve_dare(sys.a(), sys.b(), sys.q(), sys.r(), tol)?;
    let cost = (&sol.p * sys.sigma_w()).trace();
    Ok(OptimalPolicy {
        p: sol.p,
        gain: sol.gain,
        cost,
    })
}

/// Column-major `m×n ↔ mn` flattening; an isometry for the Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyVec {
    pub m: usize,
    pub n: usize,
}

impl PolicyVec {
    pub fn dim(&self) -> usize {
        self.m * self.n
    }

    pub fn to_vec(&self, k: &Matrix) -> Vec<f64> {
        debug_assert_eq!((k.nrows(), k.ncols()), (self.m, self.n));
        k.as_slice().to_vec()
    }

    pub fn to_matrix(&self, v: &[f64]) -> Matrix {
        Matrix::from_column_slice(self.m, self.n, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::random_stable_instance;
    use approx::assert_relative_eq;

    fn scalar() -> LtiSystem {
        let one = Matrix::from_element(1, 1, 1.0);
        LtiSystem::new(
            Matrix::from_element(1, 1, 0.5),
            one.clone(),
            one.clone(),
            one.clone(),
            one,
        )
        .unwrap()
    }

    #[test]
    fn scalar_closed_forms() {
        let sys = scalar();
        let k = Matrix::zeros(1, 1);
        assert_relative_eq!(lqr_cost(&sys, &k).unwrap(), 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(lqr_grad(&sys, &k).unwrap()[(0, 0)], 16.0 / 9.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_dynamics() {
        let i = Matrix::identity(2, 2);
        let sys = LtiSystem::new(
            Matrix::zeros(2, 2),
            Matrix::identity(2, 1),
            i.clone(),
            Matrix::identity(1, 1),
            i,
        )
        .unwrap();
        let k = Matrix::zeros(1, 2);
        assert_relative_eq!(lqr_cost(&sys, &k).unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(lqr_grad(&sys, &k).unwrap().amax(), 0.0);
        let opt = optimal_policy(&sys, DEFAULT_TOL).unwrap();
        assert_relative_eq!(opt.cost, 2.0, epsilon = 1e-12);
        assert!(opt.gain.amax() < 1e-14);
    }

    #[test]
    fn unstabilizing_gain_is_rejected() {
        let sys = scalar();
        // a + b·k = 1.01
        let k = Matrix::from_element(1, 1, 0.51);
        assert!(matches!(lqr_cost(&sys, &k), Err(LqrError::Unstabilizing { .. })));
        assert!(matches!(lqr_grad(&sys, &k), Err(LqrError::Unstabilizing { .. })));
    }

    #[test]
    fn scalar_riccati() {
        let opt = optimal_policy(&scalar(), DEFAULT_TOL).unwrap();
        let p = (0.25 + 4.0625f64.sqrt()) / 2.0;
        assert_relative_eq!(opt.p[(0, 0)], p, epsilon = 1e-10);
        assert_relative_eq!(opt.gain[(0, 0)], -0.5 * p / (1.0 + p), epsilon = 1e-10);
        assert!((opt.gain[(0, 0)] + 0.26556).abs() < 1e-5);
    }

    #[test]
    fn optimal_gain_is_stationary_and_beats_samples() {
        let sys = random_stable_instance(4, 2, 3, 0.9);
        let opt = optimal_policy(&sys, DEFAULT_TOL).unwrap();
        let g = lqr_grad(&sys, &opt.gain).unwrap();
        assert!(g.norm() <= 1e-6 * (1.0 + opt.gain.norm()), "{}", g.norm());
        assert_relative_eq!(lqr_cost(&sys, &opt.gain).unwrap(), opt.cost, max_relative = 1e-9);
    }

    #[test]
    fn vectorization_is_an_isometry() {
        let pv = PolicyVec { m: 3, n: 5 };
        let k = Matrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64 - 7.0);
        let v = pv.to_vec(&k);
        assert_eq!(pv.to_matrix(&v), k);
        assert_eq!(v.iter().map(|x| x * x).sum::<f64>().sqrt(), k.norm());
    }
}
