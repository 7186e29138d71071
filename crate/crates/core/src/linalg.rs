//! Dense real-matrix helpers and the discrete-time control solvers used by
//! every LQR computation: spectral radius, discrete Lyapunov equations and the
//! discrete algebraic Riccati equation.
//!
//! Matrices are `nalgebra` dynamic matrices. The solvers are plain fixed-point
//! schemes; no eigen-decomposition is needed except for the spectral radius.

use nalgebra::{DMatrix, DVector, Schur};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// A matrix counts as Schur-stable only if its spectral radius is below `1 - SCHUR_MARGIN`.
pub const SCHUR_MARGIN: f64 = 1e-8;

/// Default absolute-relative tolerance for the Lyapunov and Riccati solvers.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_DOUBLINGS: usize = 64;
const DARE_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Schur-stable (spectral radius {rho:.12})")]
    NotSchurStable { rho: f64 },
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is singular or not positive definite")]
    Singular,
}

/// Which of the two discrete Lyapunov forms to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovForm {
    /// `X = W + Mᵀ X M` (the cost-to-go / `P_K` form).
    Observability,
    /// `X = W + M X Mᵀ` (the state covariance / `Σ_K` form).
    Controllability,
}

#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub x: Matrix,
    /// Frobenius norm of the fixed-point defect of the returned `x`.
    pub residual: f64,
    /// Number of doubling steps taken.
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct DareSolution {
    /// Stabilizing solution of the Riccati equation.
    pub p: Matrix,
    /// Optimal gain for the `u = K x` convention, `K = -(R + BᵀPB)⁻¹ BᵀPA`.
    pub gain: Matrix,
    pub iterations: usize,
}

fn ensure_square(m: &Matrix) -> Result<usize, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn ensure_finite(m: &Matrix) -> Result<(), LinalgError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Largest eigenvalue magnitude, computed from the real Schur form.
/// Complex-conjugate pairs come out of the 2×2 diagonal blocks.
pub fn spectral_radius(m: &Matrix) -> Result<f64, LinalgError> {
    let n = ensure_square(m)?;
    ensure_finite(m)?;
    match n {
        0 => return Ok(0.0),
        1 => return Ok(m[(0, 0)].abs()),
        _ => {}
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000).ok_or(LinalgError::NoConvergence {
        solver: "real Schur QR iteration",
        iterations: 100_000,
        residual: f64::NAN,
    })?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn is_schur_stable(m: &Matrix) -> Result<bool, LinalgError> {
    Ok(spectral_radius(m)? < 1.0 - SCHUR_MARGIN)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn lyapunov_residual(m: &Matrix, w: &Matrix, x: &Matrix, form: LyapunovForm) -> f64 {
    let image = match form {
        LyapunovForm::Observability => w + m.transpose() * x * m,
        LyapunovForm::Controllability => w + m * x * m.transpose(),
    };
    (x - image).norm()
}

/// Solves `X = W + MᵀXM` (or the transposed twin) by the doubling iteration
/// `X ← X + A_kᵀ X A_k`, `A_{k+1} = A_k²`, starting from `X = W`, `A_0 = M`.
///
/// Success requires `residual ≤ tol · (1 + ‖X‖_F)`.
pub fn solve_discrete_lyapunov(
    m: &Matrix,
    w: &Matrix,
    form: LyapunovForm,
    tol: f64,
) -> Result<LyapunovSolution, LinalgError> {
    let n = ensure_square(m)?;
    if w.nrows() != n || w.ncols() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "W is {}x{}, M is {n}x{n}",
            w.nrows(),
            w.ncols()
        )));
    }
    ensure_finite(w)?;
    let rho = spectral_radius(m)?;
    if rho >= 1.0 - SCHUR_MARGIN {
        return Err(LinalgError::NotSchurStable { rho });
    }

    let mut x = w.clone();
    let mut a = m.clone();
    let mut iterations = 0;
    loop {
        let increment = match form {
            LyapunovForm::Observability => a.transpose() * &x * &a,
            LyapunovForm::Controllability => &a * &x * a.transpose(),
        };
        x += &increment;
        iterations += 1;
        let inc_norm = increment.norm();
        if inc_norm <= 0.25 * f64::EPSILON * x.norm() || a.norm() == 0.0 {
            break;
        }
        if iterations >= MAX_DOUBLINGS {
            let residual = lyapunov_residual(m, w, &x, form);
            return Err(LinalgError::NoConvergence {
                solver: "Lyapunov doubling",
                iterations,
                residual,
            });
        }
        a = &a * &a;
    }
    let x = symmetrize(&x);
    ensure_finite(&x)?;
    let residual = lyapunov_residual(m, w, &x, form);
    if residual > tol * (1.0 + x.norm()) {
        return Err(LinalgError::NoConvergence {
            solver: "Lyapunov doubling",
            iterations,
            residual,
        });
    }
    Ok(LyapunovSolution {
        x,
        residual,
        iterations,
    })
}

fn spd_solve(s: &Matrix, rhs: &Matrix) -> Result<Matrix, LinalgError> {
    match s.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => s.clone().lu().solve(rhs).ok_or(LinalgError::Singular),
    }
}

fn riccati_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix, LinalgError> {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let rhs = &bt_p * a;
    Ok(-spd_solve(&s, &rhs)?)
}

/// Riccati value iteration `P ← Q + AᵀPA + AᵀPB K(P)` from `P₀ = Q`, where
/// `K(P) = -(R + BᵀPB)⁻¹BᵀPA`. Stops once successive iterates differ by at
/// most `tol · (1 + ‖P‖_F)`; non-stabilizable pairs never settle and hit the cap.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, tol: f64) -> Result<DareSolution, LinalgError> {
    let n = ensure_square(a)?;
    let m = ensure_square(r)?;
    if b.nrows() != n || b.ncols() != m || q.nrows() != n || q.ncols() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "A {n}x{n}, B {}x{}, Q {}x{}, R {m}x{m}",
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let mut p = q.clone();
    let mut diff = f64::INFINITY;
    for it in 1..=DARE_MAX_ITERS {
        let gain = riccati_gain(a, b, r, &p)?;
        let next = symmetrize(&(q + a.transpose() * &p * a + a.transpose() * &p * b * &gain));
        ensure_finite(&next)?;
        diff = (&next - &p).norm();
        p = next;
        if diff <= tol * (1.0 + p.norm()) {
            let gain = riccati_gain(a, b, r, &p)?;
            return Ok(DareSolution {
                p,
                gain,
                iterations: it,
            });
        }
    }
    Err(LinalgError::NoConvergence {
        solver: "Riccati value iteration",
        iterations: DARE_MAX_ITERS,
        residual: diff,
    })
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Extreme eigenvalues `(λ_min, λ_max)` of the symmetric part of `m`.
pub fn sym_eig_bounds(m: &Matrix) -> Result<(f64, f64), LinalgError> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let eig = symmetrize(m).symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.nrows() == m.ncols() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(spectral_radius(&Matrix::identity(2, 2)).unwrap(), 1.0, epsilon = 1e-12);
        let nil = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(spectral_radius(&nil).unwrap() < 1e-12);
        let tri = Matrix::from_row_slice(2, 2, &[0.9, 0.5, 0.0, 0.8]);
        assert_relative_eq!(spectral_radius(&tri).unwrap(), 0.9, max_relative = 1e-9);
    }

    #[test]
    fn spectral_radius_complex_pair() {
        // rotation scaled by 0.7: eigenvalues 0.7·e^{±iθ}
        let (c, s) = (0.3f64.cos() * 0.7, 0.3f64.sin() * 0.7);
        let m = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 0.7, max_relative = 1e-12);
    }

    #[test]
    fn spectral_radius_rejects_non_square() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            spectral_radius(&m),
            Err(LinalgError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn lyapunov_examples() {
        let w = Matrix::identity(2, 2);
        let sol = solve_discrete_lyapunov(&Matrix::zeros(2, 2), &w, LyapunovForm::Observability, DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.x, w, epsilon = 1e-15);

        let m = Matrix::from_element(1, 1, 0.5);
        let sol = solve_discrete_lyapunov(
            &m,
            &Matrix::from_element(1, 1, 1.0),
            LyapunovForm::Observability,
            DEFAULT_TOL,
        )
        .unwrap();
        assert_relative_eq!(sol.x[(0, 0)], 4.0 / 3.0, max_relative = 1e-14);

        let m = Matrix::identity(2, 2) * 0.5;
        let sol = solve_discrete_lyapunov(&m, &w, LyapunovForm::Controllability, DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.x, Matrix::identity(2, 2) * (4.0 / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let m = Matrix::identity(2, 2);
        let err = solve_discrete_lyapunov(&m, &m, LyapunovForm::Observability, DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, LinalgError::NotSchurStable { .. }));
    }

    #[test]
    fn lyapunov_residual_on_random_stable_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let raw = random_matrix(&mut rng, n, n);
            let m = &raw * (0.95 / spectral_radius(&raw).unwrap());
            let g = random_matrix(&mut rng, n, n);
            let w = &g * g.transpose() + Matrix::identity(n, n) * 0.1;
            for form in [LyapunovForm::Observability, LyapunovForm::Controllability] {
                let sol = solve_discrete_lyapunov(&m, &w, form, DEFAULT_TOL).unwrap();
                assert!(sol.residual <= DEFAULT_TOL * (1.0 + sol.x.norm()));
                assert!(is_symmetric(&sol.x, 1e-10));
                let (lo, _) = sym_eig_bounds(&sol.x).unwrap();
                assert!(lo > 0.0);
            }
        }
    }

    #[test]
    fn lyapunov_transpose_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(2..=5);
            let raw = random_matrix(&mut rng, n, n);
            let m = &raw * (0.9 / spectral_radius(&raw).unwrap());
            let g = random_matrix(&mut rng, n, n);
            let w = &g * g.transpose();
            let obs = solve_discrete_lyapunov(&m, &w, LyapunovForm::Observability, DEFAULT_TOL).unwrap();
            let ctr = solve_discrete_lyapunov(&m.transpose(), &w, LyapunovForm::Controllability, DEFAULT_TOL).unwrap();
            assert_relative_eq!(obs.x, ctr.x, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn dare_with_zero_dynamics_returns_q() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let q = Matrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]);
        let r = Matrix::identity(1, 1);
        let sol = solve_dare(&a, &b, &q, &r, DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.p, q, epsilon = 1e-14);
        assert!(sol.gain.amax() < 1e-14);
    }

    #[test]
    fn dare_scalar_matches_quadratic_formula() {
        // p² − 0.25p − 1 = 0 for a = 0.5, b = q = r = 1
        let one = Matrix::from_element(1, 1, 1.0);
        let a = Matrix::from_element(1, 1, 0.5);
        let sol = solve_dare(&a, &one, &one, &one, DEFAULT_TOL).unwrap();
        let p = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert_relative_eq!(sol.p[(0, 0)], p, max_relative = 1e-11);
        assert_relative_eq!(sol.gain[(0, 0)], -0.5 * p / (1.0 + p), max_relative = 1e-11);
        assert_relative_eq!(p, 1.13278, epsilon = 1e-5);
        assert_relative_eq!(sol.gain[(0, 0)], -0.26556, epsilon = 1e-5);
    }

    #[test]
    fn op_norm_and_eig_bounds() {
        let m = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert_relative_eq!(op_norm(&m), 4.0, epsilon = 1e-12);
        let (lo, hi) = sym_eig_bounds(&m).unwrap();
        assert_relative_eq!(lo, -4.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 3.0, epsilon = 1e-12);
    }
}
