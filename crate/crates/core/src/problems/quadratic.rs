use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{Matrix, Vector};
use crate::optimize::{GradOracle, OracleError};

/// `f(x) = ½xᵀHx − cᵀx` with a known spectrum.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    hessian: Matrix,
    linear: Vector,
    minimizer: Vector,
    f_star: f64,
    spectrum: Vec<f64>,
}

impl QuadraticProblem {
    /// `H = U diag(spectrum) Uᵀ` with orthogonal `U`; `x* = 0` until recentred.
    pub fn from_spectrum(basis: &Matrix, spectrum: Vec<f64>) -> Self {
        let d = spectrum.len();
        assert_eq!(basis.nrows(), d);
        assert!(spectrum.iter().all(|&l| l > 0.0), "spectrum must be positive");
        let lam = Matrix::from_diagonal(&DVector::from_vec(spectrum.clone()));
        let h = basis * lam * basis.transpose();
        let h = (&h + h.transpose()) * 0.5;
        Self {
            hessian: h,
            linear: Vector::zeros(d),
            minimizer: Vector::zeros(d),
            f_star: 0.0,
            spectrum,
        }
    }

    /// Moves the minimizer to `x_star` by setting `c = H·x*`.
    pub fn centered_at(mut self, x_star: &[f64]) -> Self {
        self.minimizer = Vector::from_column_slice(x_star);
        self.linear = &self.hessian * &self.minimizer;
        self.f_star = -0.5 * self.linear.dot(&self.minimizer);
        self
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn minimizer(&self) -> &[f64] {
        self.minimizer.as_slice()
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.spectrum.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        self.spectrum.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn condition_number(&self) -> f64 {
        self.largest_eigenvalue() / self.smallest_eigenvalue()
    }
}

/// Haar-ish orthogonal matrix from the QR factor of a seeded Gaussian matrix.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Quadratic with spectrum log-uniform on `[1, κ]`; both endpoints are
/// attained exactly so the declared constants are `μ = 1`, `L = κ`.
pub fn make_quadratic(d: usize, kappa: f64, seed: u64) -> QuadraticProblem {
    assert!(d >= 1 && kappa >= 1.0, "need d >= 1 and kappa >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if kappa == 1.0 {
        return QuadraticProblem::from_spectrum(&Matrix::identity(d, d), vec![1.0; d]);
    }
    let spectrum: Vec<f64> = (0..d)
        .map(|i| match i {
            0 => 1.0,
            i if i == d - 1 => kappa,
            _ => kappa.powf(rng.random::<f64>()),
        })
        .collect();
    let basis = random_orthogonal(d, &mut rng);
    QuadraticProblem::from_spectrum(&basis, spectrum)
}

impl GradOracle for QuadraticProblem {
    fn dim(&self) -> usize {
        self.spectrum.len()
    }

    fn smoothness(&self) -> f64 {
        self.largest_eigenvalue()
    }

    fn pl_constant(&self) -> Option<f64> {
        Some(self.smallest_eigenvalue())
    }

    fn value(&self, x: &[f64]) -> Result<f64, OracleError> {
        let x = Vector::from_column_slice(x);
        Ok(0.5 * x.dot(&(&self.hessian * &x)) - self.linear.dot(&x))
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn gap(&self, x: &[f64]) -> Result<f64, OracleError> {
        let dx = Vector::from_column_slice(x) - &self.minimizer;
        Ok(0.5 * dx.dot(&(&self.hessian * &dx)))
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        let x = Vector::from_column_slice(x);
        Ok((&self.hessian * x - &self.linear).as_slice().to_vec())
    }
}
