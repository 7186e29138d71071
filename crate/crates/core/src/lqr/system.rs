use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LqrError;
use crate::linalg::{spectral_radius, sym_eig_bounds, Matrix};

/// Discrete-time plant `x_{k+1} = Ax_k + Bu_k + w_k` with stage cost
/// `xᵀQx + uᵀRu` and `w_k ~ N(0, Σ_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    q: Matrix,
    r: Matrix,
    sigma_w: Matrix,
    noiseless: bool,
}

fn check_spd(name: &str, m: &Matrix) -> Result<(), LqrError> {
    if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(LqrError::InvalidSystem(format!("{name} is not symmetric")));
    }
    let (lo, _) = sym_eig_bounds(m)?;
    if lo <= 0.0 {
        return Err(LqrError::InvalidSystem(format!(
            "{name} is not positive definite (λ_min = {lo:e})"
        )));
    }
    Ok(())
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, q: Matrix, r: Matrix, sigma_w: Matrix) -> Result<Self, LqrError> {
        let n = a.nrows();
        let m = b.ncols();
        let shapes = [
            ("A", &a, n, n),
            ("B", &b, n, m),
            ("Q", &q, n, n),
            ("R", &r, m, m),
            ("Sigma_w", &sigma_w, n, n),
        ];
        for (name, mat, rows, cols) in shapes {
            if mat.nrows() != rows || mat.ncols() != cols {
                return Err(LqrError::InvalidSystem(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(LqrError::InvalidSystem(format!("{name} has non-finite entries")));
            }
        }
        check_spd("Q", &q)?;
        check_spd("R", &r)?;
        check_spd("Sigma_w", &sigma_w)?;
        Ok(Self {
            a,
            b,
            q,
            r,
            sigma_w,
            noiseless: false,
        })
    }

    /// Same plant with the disturbance switched off in simulation. Exact
    /// costs still use `Σ_w`; only rollouts see zero noise.
    pub fn without_process_noise(mut self) -> Self {
        self.noiseless = true;
        self
    }

    pub fn is_noiseless(&self) -> bool {
        self.noiseless
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn q(&self) -> &Matrix {
        &self.q
    }
    pub fn r(&self) -> &Matrix {
        &self.r
    }
    pub fn sigma_w(&self) -> &Matrix {
        &self.sigma_w
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Plain-text form: `n m`, then A, B, Q, R, Σ_w as row-major blocks
    /// separated by blank lines. Numbers print in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n(), self.m());
        for mat in [&self.a, &self.b, &self.q, &self.r, &self.sigma_w] {
            s.push('\n');
            for i in 0..mat.nrows() {
                let row: Vec<String> = (0..mat.ncols()).map(|j| format!("{}", mat[(i, j)])).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LqrError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (ln, header) = lines.next().ok_or(LqrError::Parse {
            line: 1,
            msg: "empty system file".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|e| LqrError::Parse {
                line: ln,
                msg: format!("header: {e}"),
            })?;
        let [n, m] = dims[..] else {
            return Err(LqrError::Parse {
                line: ln,
                msg: "header must be `n m`".into(),
            });
        };
        let mut block = |rows: usize, cols: usize| -> Result<Matrix, LqrError> {
            let mut out = Matrix::zeros(rows, cols);
            for i in 0..rows {
                let (ln, line) = lines.next().ok_or(LqrError::Parse {
                    line: 0,
                    msg: "unexpected end of file".into(),
                })?;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|e| LqrError::Parse {
                        line: ln,
                        msg: format!("{e}"),
                    })?;
                if vals.len() != cols {
                    return Err(LqrError::Parse {
                        line: ln,
                        msg: format!("expected {cols} entries, found {}", vals.len()),
                    });
                }
                for (j, v) in vals.into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
            Ok(out)
        };
        let a = block(n, n)?;
        let b = block(n, m)?;
        let q = block(n, n)?;
        let r = block(m, m)?;
        let sigma = block(n, n)?;
        if let Some((ln, _)) = lines.next() {
            return Err(LqrError::Parse {
                line: ln,
                msg: "trailing data".into(),
            });
        }
        Self::new(a, b, q, r, sigma)
    }
}

/// Gaussian `A` rescaled to spectral radius `rho_target`, Gaussian `B`, and
/// `Q = 5I`, `R = 5I`, `Σ_w = I`.
pub fn random_stable_instance(n: usize, m: usize, seed: u64, rho_target: f64) -> LtiSystem {
    random_stable_instance_with(n, m, seed, rho_target, 5.0, 5.0, 1.0)
}

pub fn random_stable_instance_with(
    n: usize,
    m: usize,
    seed: u64,
    rho_target: f64,
    q_scale: f64,
    r_scale: f64,
    noise_scale: f64,
) -> LtiSystem {
    assert!(rho_target > 0.0 && rho_target < 1.0, "rho_target must lie in (0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |rows, cols| Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let raw = gauss(n, n);
    let b = gauss(n, m);
    let rho = spectral_radius(&raw).expect("finite Gaussian matrix");
    let a = raw * (rho_target / rho);
    LtiSystem::new(
        a,
        b,
        Matrix::identity(n, n) * q_scale,
        Matrix::identity(m, m) * r_scale,
        Matrix::identity(n, n) * noise_scale,
    )
    .expect("scaled identities are SPD")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_instances_are_stable_and_reproducible() {
        for seed in 0..10 {
            let sys = random_stable_instance(5, 3, seed, 0.9);
            let rho = spectral_radius(sys.a()).unwrap();
            assert!((rho - 0.9).abs() <= 1e-9, "{rho}");
            assert_eq!(sys, random_stable_instance(5, 3, seed, 0.9));
        }
        assert_ne!(
            random_stable_instance(5, 3, 1, 0.9),
            random_stable_instance(5, 3, 2, 0.9)
        );
    }

    #[test]
    fn text_round_trip_is_exact() {
        let sys = random_stable_instance(4, 2, 7, 0.8);
        let back = LtiSystem::from_text(&sys.to_text()).unwrap();
        assert_eq!(back, sys);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(LtiSystem::from_text("").is_err());
        assert!(LtiSystem::from_text("1 1\n0.5\n1\n1\n1\n").is_err());
        assert!(LtiSystem::from_text("1 1\n0.5\n1\n1\n1\n1\n9\n").is_err());
        assert!(LtiSystem::from_text("1 1\n0.5\n1\n-1\n1\n1\n").is_err());
        assert!(LtiSystem::from_text("1 1\n0.5\n1\n1\n1\n1\n").is_ok());
    }
}
