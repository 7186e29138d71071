//! Trajectory-based gradient estimation and its error schedule.
//!
//! Trajectory `i` of iteration `t` draws everything (perturbation and process
//! noise) from its own ChaCha stream keyed by `(seed, t, i)`, so estimates are
//! reproducible and independent of how trajectories are scheduled on threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{LqrConstants, LqrError, LtiSystem};
use crate::linalg::Matrix;

/// States beyond this norm mean the played gain is destabilizing.
pub const BLOWUP_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub trajectories: usize,
    pub horizon: usize,
    pub radius: f64,
    pub seed: u64,
}

impl EstimatorConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), LqrError> {
        if self.trajectories == 0 || self.horizon == 0 || !(self.radius > 0.0) {
            return Err(LqrError::InvalidSystem(format!(
                "estimator needs positive trajectories, horizon and radius, got {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn trajectory_rng(seed: u64, t: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((t << 32) | (i & 0xffff_ffff));
    rng
}

/// Row-major copies of the plant for the tight simulation loop.
#[derive(Debug, Clone)]
struct Plant {
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
    /// Lower Cholesky factor of `Σ_w`, row-major; `None` when noiseless.
    noise: Option<Vec<f64>>,
}

fn row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn quad_form(mat: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    (0..d)
        .map(|i| v[i] * mat[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

impl Plant {
    fn new(sys: &LtiSystem) -> Self {
        let noise = if sys.is_noiseless() {
            None
        } else {
            let l = sys.sigma_w().clone().cholesky().expect("Σ_w validated SPD").l();
            Some(row_major(&l))
        };
        Self {
            n: sys.n(),
            m: sys.m(),
            a: row_major(sys.a()),
            b: row_major(sys.b()),
            q: row_major(sys.q()),
            r: row_major(sys.r()),
            noise,
        }
    }

    /// Simulates `horizon` steps from the origin under `u = gain·x`,
    /// returning `Σ_{k<N} xᵀQx + uᵀRu`. `visit` sees every `(x_k, u_k)`.
    fn run<F: FnMut(&[f64], &[f64])>(
        &self,
        gain: &[f64],
        horizon: usize,
        rng: &mut ChaCha8Rng,
        mut visit: F,
    ) -> Result<(f64, Vec<f64>), LqrError> {
        let (n, m) = (self.n, self.m);
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut u = vec![0.0; m];
        let mut z = vec![0.0; n];
        let mut cost = 0.0;
        for step in 0..horizon {
            for (i, ui) in u.iter_mut().enumerate() {
                *ui = gain[i * n..(i + 1) * n].iter().zip(&x).map(|(g, x)| g * x).sum();
            }
            cost += quad_form(&self.q, &x) + quad_form(&self.r, &u);
            visit(&x, &u);
            if let Some(l) = &self.noise {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                for (i, nx) in next.iter_mut().enumerate() {
                    *nx = l[i * n..i * n + i + 1].iter().zip(&z).map(|(l, z)| l * z).sum();
                }
            } else {
                next.iter_mut().for_each(|v| *v = 0.0);
            }
            for (i, nx) in next.iter_mut().enumerate() {
                *nx += self.a[i * n..(i + 1) * n]
                    .iter()
                    .zip(&x)
                    .map(|(a, x)| a * x)
                    .sum::<f64>();
                *nx += self.b[i * m..(i + 1) * m]
                    .iter()
                    .zip(&u)
                    .map(|(b, u)| b * u)
                    .sum::<f64>();
            }
            std::mem::swap(&mut x, &mut next);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm.is_nan() || norm > BLOWUP_NORM {
                return Err(LqrError::Blowup { step: step + 1, norm });
            }
        }
        Ok((cost, x))
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    /// `x_0 … x_N`.
    pub states: Vec<Vec<f64>>,
    /// `u_0 … u_{N−1}`.
    pub inputs: Vec<Vec<f64>>,
    /// `Σ_{k<N} x_kᵀQx_k + u_kᵀRu_k`.
    pub cost: f64,
}

/// One trajectory from `x_0 = 0` under `u_k = K x_k`.
pub fn rollout(sys: &LtiSystem, gain: &Matrix, horizon: usize, rng: &mut ChaCha8Rng) -> Result<Rollout, LqrError> {
    let plant = Plant::new(sys);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let (cost, last) = plant.run(&row_major(gain), horizon, rng, |x, u| {
        states.push(x.to_vec());
        inputs.push(u.to_vec());
    })?;
    states.push(last);
    Ok(Rollout { states, inputs, cost })
}

/// Cost-only rollout, for Monte-Carlo checks.
pub fn rollout_cost(sys: &LtiSystem, gain: &Matrix, horizon: usize, rng: &mut ChaCha8Rng) -> Result<f64, LqrError> {
    Ok(Plant::new(sys).run(&row_major(gain), horizon, rng, |_, _| {})?.0)
}

/// Unit-Frobenius Gaussian direction, sampled in column-major order.
pub fn sample_direction(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    loop {
        let u = Matrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = u.norm();
        if norm > 0.0 {
            return u / norm;
        }
    }
}

/// Per-trajectory estimates `(mn/(rN))·cost_i·U_i`, in trajectory order.
pub fn gradient_samples(
    sys: &LtiSystem,
    gain: &Matrix,
    cfg: &EstimatorConfig,
    t: u64,
) -> Result<Vec<Matrix>, LqrError> {
    cfg.validate()?;
    let plant = Plant::new(sys);
    let (m, n) = (sys.m(), sys.n());
    let scale = (m * n) as f64 / (cfg.radius * cfg.horizon as f64);
    (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, t, i as u64);
            let dir = sample_direction(m, n, &mut rng);
            let played = gain + &dir * cfg.radius;
            let (cost, _) = plant.run(&row_major(&played), cfg.horizon, &mut rng, |_, _| {})?;
            Ok(dir * (scale * cost))
        })
        .collect()
}

fn pairwise_sum(items: &[Matrix]) -> Matrix {
    match items.len() {
        1 => items[0].clone(),
        len => {
            let (lo, hi) = items.split_at(len / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Average of `trajectories` one-trajectory estimates at iteration `t`.
pub fn estimate_gradient(sys: &LtiSystem, gain: &Matrix, cfg: &EstimatorConfig, t: u64) -> Result<Matrix, LqrError> {
    let samples = gradient_samples(sys, gain, cfg, t)?;
    Ok(pairwise_sum(&samples) / samples.len() as f64)
}

/// The four contributions to the high-probability estimation error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonTerms {
    /// Smoothing bias `L·r`.
    pub bias: f64,
    /// Perturbation sampling error, `∝ 1/√ℓ`.
    pub sampling: f64,
    /// Finite-horizon truncation.
    pub truncation: f64,
    /// Process-noise concentration.
    pub noise: f64,
}

impl EpsilonTerms {
    pub fn total(&self) -> f64 {
        self.bias + self.sampling + self.truncation + self.noise
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleInputs {
    pub m: usize,
    pub n: usize,
    pub radius: f64,
    pub trajectories: usize,
    pub horizon: usize,
    pub iterations: usize,
    pub delta: f64,
    pub trace_sigma: f64,
}

pub fn epsilon_schedule(c: &LqrConstants, s: &ScheduleInputs) -> EpsilonTerms {
    assert!(s.delta > 0.0 && s.delta < 1.0, "delta must lie in (0, 1)");
    let mn = (s.m * s.n) as f64;
    let r = s.radius;
    let ell = s.trajectories as f64;
    let big_n = s.horizon as f64;
    let big_t = s.iterations as f64;
    let d = s.delta;
    let tr = s.trace_sigma;
    let one_eta = 1.0 - c.eta;
    let log45 = (45.0 * big_t / d).ln();

    let bias = c.smoothness * r;
    let sampling = mn * c.j_bar / (r * ell.sqrt()) * (8.0 * log45).sqrt();
    let truncation = 10.0 * mn * c.beta1 * c.zeta.powi(4) * tr / (3.0 * big_t * big_n * r * one_eta)
        * (27.0 * big_t * big_n / d).ln();
    let noise = 10.0 * mn * c.beta1 * c.zeta.powi(2) * tr / (r * one_eta * one_eta)
        * (3.0 * big_n * ell * big_t / d).ln()
        * ((1.0 + c.zeta.powi(2)) / ell.sqrt() * (2.0 * log45).sqrt() + c.zeta.powi(4) / (big_n * one_eta));
    EpsilonTerms {
        bias,
        sampling,
        truncation,
        noise,
    }
}
