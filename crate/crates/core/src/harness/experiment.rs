use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{Algorithm, ExperimentConfig, NoiseKind, PerturbKind, ProblemKind, QuantizerKind};
use super::fit::{fit_gaps, RateFit};
use super::HarnessError;
use crate::linalg::Matrix;
use crate::lqr::{
    random_stable_instance_with, EstimatorConfig, GradientMode, LqrError, LqrOracle, LtiSystem, NoiseMode,
};
use crate::optimize::bounds::{guaranteed_step, net_gamma, noisy_guaranteed_step, rate_threshold_b};
use crate::optimize::invariants::{check_trace, InvariantReport};
use crate::optimize::{
    gd_static_quantized, gd_unquantized, run, GradOracle, OptimizeError, OracleError, RunConfig, RunTrace,
};
use crate::problems::{make_quadratic, Perturbation, PerturbedOracle, SineBowl};
use crate::quantize::{build_net, NetOptions, QuantizerSpec};

/// Everything needed to start the loop, with every default resolved.
pub struct Prepared {
    pub oracle: Box<dyn GradOracle>,
    pub x0: Vec<f64>,
    pub quantizer: QuantizerSpec,
    pub run: RunConfig,
    pub static_range: f64,
    /// `L/μ` as declared by the oracle.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub problem: ProblemKind,
    pub algorithm: Algorithm,
    pub iters: usize,
    pub alpha: f64,
    pub r0: f64,
    pub gamma: f64,
    pub frame_bits: usize,
    pub smoothness: f64,
    pub pl_constant: Option<f64>,
    pub max_eps: f64,
    pub initial_gap: f64,
    pub final_gap: f64,
    pub total_bits: u64,
    pub rate: Option<RateFit>,
    pub violations: usize,
    pub clipped: usize,
    pub invariants: String,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:e}"));
        writeln!(s, "problem = {}", self.problem).unwrap();
        writeln!(s, "algorithm = {}", self.algorithm).unwrap();
        writeln!(s, "iters = {}", self.iters).unwrap();
        writeln!(s, "alpha = {:e}", self.alpha).unwrap();
        writeln!(s, "r0 = {:e}", self.r0).unwrap();
        writeln!(s, "gamma = {:e}", self.gamma).unwrap();
        writeln!(s, "frame_bits = {}", self.frame_bits).unwrap();
        writeln!(s, "smoothness = {:e}", self.smoothness).unwrap();
        writeln!(s, "pl_constant = {}", opt(self.pl_constant)).unwrap();
        writeln!(s, "max_eps = {:e}", self.max_eps).unwrap();
        writeln!(s, "initial_gap = {:e}", self.initial_gap).unwrap();
        writeln!(s, "final_gap = {:e}", self.final_gap).unwrap();
        writeln!(s, "total_bits = {}", self.total_bits).unwrap();
        writeln!(s, "rate_slope = {}", opt(self.rate.map(|r| r.slope))).unwrap();
        writeln!(s, "rate_r2 = {}", opt(self.rate.map(|r| r.r_squared))).unwrap();
        writeln!(s, "violations = {}", self.violations).unwrap();
        writeln!(s, "clipped = {}", self.clipped).unwrap();
        writeln!(s, "invariants = {}", self.invariants).unwrap();
        s
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub trace: RunTrace,
    pub report: InvariantReport,
    pub summary: RunSummary,
}

impl ExperimentOutcome {
    /// Writes `<stem>.csv` and `<stem>.summary` next to each other.
    pub fn write(&self, csv_path: &Path) -> Result<(), HarnessError> {
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(csv_path, self.trace.to_csv_string())?;
        fs::write(csv_path.with_extension("summary"), self.summary.to_text())?;
        Ok(())
    }
}

fn lqr_err(e: LqrError) -> HarnessError {
    match e {
        LqrError::Unstabilizing { .. } | LqrError::Blowup { .. } => HarnessError::Divergence {
            detail: e.to_string(),
            partial: None,
        },
        other => HarnessError::Config(other.to_string()),
    }
}

fn oracle_err(e: OracleError) -> HarnessError {
    match e {
        OracleError::Unstabilizing { .. } | OracleError::OutOfDomain(_) => HarnessError::Divergence {
            detail: e.to_string(),
            partial: None,
        },
        OracleError::Numerical(m) => HarnessError::Config(m),
    }
}

fn random_start(dim: usize, radius: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.into_iter().map(|c| c * radius / n).collect()
}

fn load_system(cfg: &ExperimentConfig) -> Result<LtiSystem, HarnessError> {
    match &cfg.system {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            LtiSystem::from_text(&text).map_err(lqr_err)
        }
        None => Ok(random_stable_instance_with(
            cfg.lqr_n,
            cfg.lqr_m,
            cfg.instance_seed,
            cfg.lqr_rho,
            cfg.q_scale,
            cfg.r_scale,
            cfg.noise_scale,
        )),
    }
}

fn manual_schedule(cfg: &ExperimentConfig) -> Vec<f64> {
    (0..=cfg.iters)
        .map(|t| cfg.noise_eps * cfg.noise_decay.powi(t as i32))
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Oracle, start point, noise schedule, gradient bound for R₀, local radius.
type Setup = (Box<dyn GradOracle>, Vec<f64>, Vec<f64>, Option<f64>, Option<f64>);

/// Resolves defaults and builds the oracle, start point and quantizer.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let noisy = cfg.algorithm == Algorithm::Naqgd;
    let (oracle, x0, eps, grad_bound, radius): Setup = match cfg.problem {
        ProblemKind::Quadratic | ProblemKind::PlNonconvex => {
            let x0 = random_start(cfg.dim, cfg.init_radius, cfg.instance_seed);
            let eps = if noisy {
                manual_schedule(cfg)
            } else {
                vec![0.0; cfg.iters + 1]
            };
            let kind = match cfg.perturbation {
                PerturbKind::Random => Perturbation::Random { seed: cfg.seed },
                PerturbKind::Against => Perturbation::AgainstGradient,
                PerturbKind::Along => Perturbation::AlongGradient,
            };
            let oracle: Box<dyn GradOracle> = match (cfg.problem, noisy) {
                (ProblemKind::Quadratic, false) => Box::new(make_quadratic(cfg.dim, cfg.kappa, cfg.instance_seed)),
                (ProblemKind::Quadratic, true) => Box::new(PerturbedOracle::new(
                    make_quadratic(cfg.dim, cfg.kappa, cfg.instance_seed),
                    eps.clone(),
                    kind,
                )),
                (_, false) => Box::new(SineBowl::new(cfg.dim, cfg.amplitude)),
                (_, true) => Box::new(PerturbedOracle::new(
                    SineBowl::new(cfg.dim, cfg.amplitude),
                    eps.clone(),
                    kind,
                )),
            };
            (oracle, x0, eps, None, None)
        }
        ProblemKind::LqrExact | ProblemKind::LqrModelFree => {
            let sys = load_system(cfg)?;
            let k0 = Matrix::zeros(sys.m(), sys.n());
            let mode = if cfg.problem == ProblemKind::LqrModelFree {
                GradientMode::ModelFree(EstimatorConfig {
                    trajectories: cfg.trajectories,
                    horizon: cfg.horizon,
                    radius: cfg.radius,
                    seed: cfg.seed,
                })
            } else {
                GradientMode::Exact
            };
            let mut lqr = LqrOracle::from_initial_gain(sys, &k0, cfg.j_bar, mode).map_err(lqr_err)?;
            if let Some(l) = cfg.smoothness {
                lqr = lqr.with_smoothness(l);
            }
            let x0 = vec![0.0; lqr.shape().dim()];
            let eps = if noisy {
                let kstar = lqr.shape().to_vec(lqr.optimal_gain());
                let path: Vec<Vec<f64>> = (0..5)
                    .map(|j| kstar.iter().map(|v| v * j as f64 / 4.0).collect())
                    .collect();
                let mode = match cfg.noise {
                    NoiseKind::Theory => NoiseMode::Theory { delta: cfg.noise_delta },
                    NoiseKind::Empirical => NoiseMode::Empirical {
                        calls: cfg.calibration_calls,
                    },
                    _ => NoiseMode::Manual(cfg.noise_eps),
                };
                if cfg.noise == NoiseKind::Manual {
                    manual_schedule(cfg)
                } else {
                    let level = lqr.noise_level(mode, cfg.iters, &path).map_err(oracle_err)?;
                    vec![level; cfg.iters + 1]
                }
            } else {
                vec![0.0; cfg.iters + 1]
            };
            let c = *lqr.constants();
            (Box::new(lqr), x0, eps, Some(c.grad_bound), Some(c.radius))
        }
    };

    let dim = oracle.dim();
    let smoothness = oracle.smoothness();
    let kappa = oracle.pl_constant().map_or(f64::INFINITY, |mu| smoothness / mu);
    let quantizer = match cfg.quantizer {
        QuantizerKind::Scalar => {
            let bits = cfg.bits.unwrap_or_else(|| rate_threshold_b(dim, kappa.max(1.0 + 1e-9)));
            QuantizerSpec::scalar(dim, bits).map_err(|e| HarnessError::Config(e.to_string()))?
        }
        QuantizerKind::Net => {
            let gamma = cfg.net_gamma.unwrap_or_else(|| net_gamma(kappa.max(1.0 + 1e-9)));
            let opts = NetOptions {
                seed: cfg.seed,
                ..NetOptions::default()
            };
            QuantizerSpec::net(build_net(dim, gamma, &opts).map_err(|e| HarnessError::Config(e.to_string()))?)
        }
    };
    let alpha = cfg.alpha.unwrap_or_else(|| match (noisy, radius, grad_bound) {
        (true, Some(d), Some(g)) => noisy_guaranteed_step(smoothness, d, g),
        _ => guaranteed_step(smoothness),
    });
    let start_grad = match grad_bound {
        Some(g) => g,
        None => norm(&oracle.grad(&x0).map_err(oracle_err)?),
    };
    // The noisy first innovation can reach ‖∇f(x₀)‖ + ε₀ exactly; a few ulps keep rounding inside the range.
    let r0 = cfg.r0.unwrap_or(if noisy {
        (start_grad + eps[0]) * (1.0 + 4.0 * f64::EPSILON)
    } else {
        start_grad
    });
    let mut run_cfg = if noisy {
        RunConfig::naqgd(alpha, r0, cfg.iters, eps)
    } else {
        RunConfig::aqgd(alpha, r0, cfg.iters)
    };
    run_cfg.overflow = cfg.overflow;
    let gamma = quantizer.gamma();
    // Runs outside the guarantee still go ahead; the checker skips the
    // envelopes that no longer apply.
    if alpha * smoothness > 1.0 / 6.0 * (1.0 + 1e-12) {
        log::warn!(
            "alpha*L = {:e} exceeds 1/6; per-step guarantees do not apply",
            alpha * smoothness
        );
    }
    if 9.0 * gamma * gamma > 1.0 {
        log::warn!("gamma = {gamma:e} exceeds 1/3; the range recursion need not contract");
    }
    if r0 < start_grad {
        log::warn!("R0 = {r0:e} is below the first gradient norm {start_grad:e}; step 0 will overflow");
    }
    Ok(Prepared {
        oracle,
        x0,
        quantizer,
        static_range: cfg.static_range.unwrap_or(r0),
        run: run_cfg,
        kappa,
    })
}

fn classify(error: OptimizeError, partial: Option<Box<RunTrace>>) -> HarnessError {
    match error {
        OptimizeError::Diverged { .. }
        | OptimizeError::Oracle(OracleError::Unstabilizing { .. })
        | OptimizeError::Oracle(OracleError::OutOfDomain(_)) => HarnessError::Divergence {
            detail: error.to_string(),
            partial,
        },
        OptimizeError::Overflow { .. } | OptimizeError::Asymmetric { .. } => HarnessError::Invariant(error.to_string()),
        other => HarnessError::Config(other.to_string()),
    }
}

/// Runs one configured experiment and re-checks its per-step guarantees.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let p = prepare(cfg)?;
    let oracle = p.oracle.as_ref();
    let trace = match cfg.algorithm {
        Algorithm::Aqgd | Algorithm::Naqgd => {
            run(&oracle, &p.quantizer, &p.x0, &p.run).map_err(|e| classify(e.error, Some(e.partial)))?
        }
        Algorithm::GdUnquantized => {
            gd_unquantized(&oracle, &p.x0, p.run.alpha, cfg.iters).map_err(|e| classify(e, None))?
        }
        Algorithm::GdStaticQuantized => {
            gd_static_quantized(&oracle, &p.quantizer, &p.x0, p.run.alpha, p.static_range, cfg.iters)
                .map_err(|e| classify(e, None))?
        }
    };
    let report = check_trace(&trace);
    let gaps = trace.gaps();
    let summary = RunSummary {
        problem: cfg.problem,
        algorithm: cfg.algorithm,
        iters: cfg.iters,
        alpha: p.run.alpha,
        r0: p.run.r0,
        gamma: trace.gamma,
        frame_bits: trace.frame_bits,
        smoothness: trace.smoothness,
        pl_constant: trace.pl_constant,
        max_eps: trace
            .eps
            .as_ref()
            .map_or(0.0, |e| e.iter().copied().fold(0.0, f64::max)),
        initial_gap: gaps[0],
        final_gap: *gaps.last().expect("a trace has at least one record"),
        total_bits: trace.total_bits(),
        rate: fit_gaps(&gaps, 0..gaps.len()).ok(),
        violations: report.violations(),
        clipped: trace.clipped,
        invariants: report.summary(),
    };
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        trace,
        report,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(iters: usize) -> ExperimentConfig {
        ExperimentConfig {
            dim: 20,
            kappa: 100.0,
            iters,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn zero_iterations_sends_nothing() {
        let out = run_experiment(&quad(0)).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.summary.total_bits, 0);
    }

    #[test]
    fn default_settings_are_clean_and_deterministic() {
        let a = run_experiment(&quad(400)).unwrap();
        assert_eq!(a.report.violations(), 0, "{}", a.report.summary());
        assert_eq!(a.report.contraction, 0);
        let b = run_experiment(&ExperimentConfig { seed: 99, ..quad(400) }).unwrap();
        assert_eq!(a.trace.to_csv_string(), b.trace.to_csv_string());
        assert!(a.summary.final_gap < a.summary.initial_gap);
    }

    #[test]
    fn every_problem_and_algorithm_runs() {
        let base = ExperimentConfig {
            iters: 20,
            dim: 4,
            ..ExperimentConfig::default()
        };
        for problem in [ProblemKind::Quadratic, ProblemKind::PlNonconvex] {
            for algorithm in [Algorithm::Aqgd, Algorithm::GdUnquantized, Algorithm::GdStaticQuantized] {
                run_experiment(&ExperimentConfig {
                    problem,
                    algorithm,
                    ..base.clone()
                })
                .unwrap();
            }
            let noisy = ExperimentConfig {
                problem,
                algorithm: Algorithm::Naqgd,
                noise: NoiseKind::Manual,
                noise_eps: 0.01,
                noise_decay: 0.9,
                ..base.clone()
            };
            run_experiment(&noisy).unwrap();
        }
        let lqr = ExperimentConfig {
            problem: ProblemKind::LqrExact,
            iters: 20,
            alpha: Some(1e-3),
            bits: Some(40),
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&lqr).unwrap();
        assert!(out.summary.final_gap < out.summary.initial_gap);
        let mf = ExperimentConfig {
            problem: ProblemKind::LqrModelFree,
            algorithm: Algorithm::Naqgd,
            noise: NoiseKind::Empirical,
            calibration_calls: 2,
            trajectories: 50,
            horizon: 100,
            alpha: Some(2e-5),
            ..lqr
        };
        let out = run_experiment(&mf).unwrap();
        assert!(out.summary.max_eps > 0.0);
    }

    #[test]
    fn net_quantizer_runs_in_low_dimension() {
        let cfg = ExperimentConfig {
            dim: 2,
            kappa: 10.0,
            quantizer: QuantizerKind::Net,
            iters: 200,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.report.violations(), 0, "{}", out.report.summary());
    }

    #[test]
    fn divergence_maps_to_its_exit_code() {
        let cfg = ExperimentConfig {
            alpha: Some(1.0),
            iters: 200,
            ..quad(0)
        };
        let gd = run_experiment(&ExperimentConfig {
            algorithm: Algorithm::GdUnquantized,
            ..cfg.clone()
        })
        .unwrap_err();
        assert_eq!(gd.exit_code(), 3, "{gd}");
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
        let coarse = run_experiment(&ExperimentConfig {
            bits: Some(1),
            ..quad(300)
        })
        .unwrap_err();
        assert_eq!(coarse.exit_code(), 3, "{coarse}");
        // A range far below the first gradient overflows under the fail policy.
        let overflow = run_experiment(&ExperimentConfig {
            r0: Some(1e-6),
            ..quad(10)
        })
        .unwrap_err();
        assert_eq!(overflow.exit_code(), 2, "{overflow}");
    }
}
