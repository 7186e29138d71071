//! Synthetic objectives with known regularity constants, plus sampling checks
//! for those constants and a bounded-noise wrapper for the noisy loop.

mod nonconvex;
mod quadratic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::optimize::{GradOracle, OracleError};

pub use nonconvex::SineBowl;
pub use quadratic::{make_quadratic, random_orthogonal, QuadraticProblem};

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub samples: usize,
    pub failures: usize,
    /// Smallest observed `‖∇f‖² / (2(f − f*))` over points with a positive gap.
    pub worst_ratio: f64,
}

impl DominationReport {
    pub fn pass_fraction(&self) -> f64 {
        1.0 - self.failures as f64 / self.samples.max(1) as f64
    }
}

/// Samples `‖∇f(x)‖² ≥ 2μ(f(x) − f*)` at points drawn by `sampler`.
pub fn check_gradient_domination<O, S>(
    oracle: &O,
    mu: f64,
    samples: usize,
    mut sampler: S,
) -> Result<DominationReport, OracleError>
where
    O: GradOracle,
    S: FnMut() -> Vec<f64>,
{
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x = sampler();
        let gap = oracle.gap(&x)?;
        let g2 = norm(&oracle.grad(&x)?).powi(2);
        if gap > 0.0 {
            worst = worst.min(g2 / (2.0 * gap));
        }
        if g2 < 2.0 * mu * gap {
            failures += 1;
        }
    }
    Ok(DominationReport {
        samples,
        failures,
        worst_ratio: worst,
    })
}

/// Largest observed `‖∇f(x) − ∇f(y)‖ / ‖x − y‖` over sampled pairs.
pub fn smoothness_witness<O, S>(oracle: &O, pairs: usize, mut sampler: S) -> Result<f64, OracleError>
where
    O: GradOracle,
    S: FnMut() -> Vec<f64>,
{
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let (x, y) = (sampler(), sampler());
        let gx = oracle.grad(&x)?;
        let gy = oracle.grad(&y)?;
        let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dn = norm(&dx);
        if dn > 0.0 {
            worst = worst.max(norm(&dg) / dn);
        }
    }
    Ok(worst)
}

/// Direction of the injected gradient error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Fresh uniformly random unit direction per iteration.
    Random { seed: u64 },
    /// Opposes the true gradient, shrinking every step.
    AgainstGradient,
    /// Along the true gradient, inflating every step.
    AlongGradient,
}

/// `∇̂f(x_t) = ∇f(x_t) + ε_t·u_t` with `‖u_t‖ = 1`, so `‖∇̂f − ∇f‖ = ε_t`.
#[derive(Debug, Clone)]
pub struct PerturbedOracle<O> {
    inner: O,
    eps: Vec<f64>,
    kind: Perturbation,
}

impl<O: GradOracle> PerturbedOracle<O> {
    pub fn new(inner: O, eps: Vec<f64>, kind: Perturbation) -> Self {
        Self { inner, eps, kind }
    }

    pub fn schedule(&self) -> &[f64] {
        &self.eps
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    fn direction(&self, grad: &[f64], t: usize) -> Vec<f64> {
        let d = grad.len();
        let gn = norm(grad);
        match self.kind {
            Perturbation::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                loop {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let n = norm(&v);
                    if n > 1e-12 {
                        return v.iter().map(|c| c / n).collect();
                    }
                }
            }
            _ if gn == 0.0 => {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                e
            }
            Perturbation::AgainstGradient => grad.iter().map(|c| -c / gn).collect(),
            Perturbation::AlongGradient => grad.iter().map(|c| c / gn).collect(),
        }
    }
}

impl<O: GradOracle> GradOracle for PerturbedOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }
    fn pl_constant(&self) -> Option<f64> {
        self.inner.pl_constant()
    }
    fn grad_bound(&self) -> Option<f64> {
        self.inner.grad_bound()
    }
    fn value(&self, x: &[f64]) -> Result<f64, OracleError> {
        self.inner.value(x)
    }
    fn optimal_value(&self) -> Option<f64> {
        self.inner.optimal_value()
    }
    fn gap(&self, x: &[f64]) -> Result<f64, OracleError> {
        self.inner.gap(x)
    }
    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        self.inner.grad(x)
    }
    fn noisy_grad(&self, x: &[f64], t: usize) -> Result<Vec<f64>, OracleError> {
        let g = self.inner.grad(x)?;
        let e = self.eps.get(t).copied().unwrap_or(0.0);
        let u = self.direction(&g, t);
        Ok(g.iter().zip(&u).map(|(g, u)| g + e * u).collect())
    }
}

/// Uniform point in the centred box `[-half, half]^d`.
pub fn box_sampler(d: usize, half: f64, seed: u64) -> impl FnMut() -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move || (0..d).map(|_| rng.random_range(-half..=half)).collect()
}
