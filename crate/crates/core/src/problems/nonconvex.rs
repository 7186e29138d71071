use crate::optimize::{GradOracle, OracleError};

/// `f(x) = Σ x_i² + a·sin²(x_i)`: non-convex for `a > 1`, yet gradient
/// dominated, with minimum value 0 at the origin.
#[derive(Debug, Clone)]
pub struct SineBowl {
    dim: usize,
    amplitude: f64,
    pl: f64,
}

/// Samples `f'(s)²/(2f(s))` of the one-dimensional profile on a dense grid.
/// The profile is separable, so its minimum is a valid constant in any
/// dimension. Outside the grid the ratio is bounded below analytically.
fn certify_pl(amplitude: f64) -> f64 {
    const HI: f64 = 60.0;
    const POINTS: usize = 2_000_000;
    let lo = 1e-3;
    let step = (HI - lo) / POINTS as f64;
    let mut best = f64::INFINITY;
    for k in 0..=POINTS {
        let s = lo + k as f64 * step;
        let f = s * s + amplitude * s.sin().powi(2);
        let fp = 2.0 * s + amplitude * (2.0 * s).sin();
        best = best.min(fp * fp / (2.0 * f));
    }
    let tail = (2.0 * HI - amplitude).powi(2) / (2.0 * (HI * HI + amplitude));
    let near_zero = 2.0 * (1.0 + amplitude) * (1.0 - 1e-3);
    best.min(tail).min(near_zero) * (1.0 - 1e-3)
}

impl SineBowl {
    pub fn new(dim: usize, amplitude: f64) -> Self {
        assert!(amplitude >= 0.0);
        Self {
            dim,
            amplitude,
            pl: certify_pl(amplitude),
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
}

impl GradOracle for SineBowl {
    fn dim(&self) -> usize {
        self.dim
    }

    /// `|f''| ≤ 2 + 2a` per coordinate.
    fn smoothness(&self) -> f64 {
        2.0 + 2.0 * self.amplitude
    }

    fn pl_constant(&self) -> Option<f64> {
        Some(self.pl)
    }

    fn value(&self, x: &[f64]) -> Result<f64, OracleError> {
        Ok(x.iter().map(|s| s * s + self.amplitude * s.sin().powi(2)).sum())
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(0.0)
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        Ok(x.iter().map(|s| 2.0 * s + self.amplitude * (2.0 * s).sin()).collect())
    }
}
