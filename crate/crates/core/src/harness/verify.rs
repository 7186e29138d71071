use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{run_experiment, Algorithm, ExperimentConfig, NoiseKind, QuantizerKind};
use crate::linalg::Matrix;
use crate::lqr::{lqr_cost, lqr_grad, random_stable_instance};
use crate::optimize::read_csv;
use crate::quantize::{scalar_encode, scalar_gamma};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> VerifyCheck {
    VerifyCheck { name, passed, detail }
}

fn quantizer_contraction(rng: &mut ChaCha8Rng) -> VerifyCheck {
    let mut failures = 0;
    let cases = 10_000;
    for _ in 0..cases {
        let d = rng.random_range(1..=64usize);
        let b = rng.random_range(1..=16u32);
        let range: f64 = rng.random_range(1e-3..1e3);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = range * rng.random::<f64>() / n.max(f64::MIN_POSITIVE);
        let x: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let (_, xhat) = scalar_encode(&x, range, b).expect("inside the range");
        let err = x.iter().zip(&xhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if err > scalar_gamma(d, b) * range {
            failures += 1;
        }
    }
    check(
        "quantizer-contraction",
        failures == 0,
        format!("{failures}/{cases} failures"),
    )
}

fn quadratic_runs(seed: u64) -> VerifyCheck {
    let mut dirty = Vec::new();
    for s in 0..10 {
        let cfg = ExperimentConfig {
            dim: 5 + (s as usize * 7) % 26,
            kappa: [2.0, 10.0, 100.0, 1000.0][s as usize % 4],
            iters: 500,
            instance_seed: seed.wrapping_add(s),
            ..ExperimentConfig::default()
        };
        match run_experiment(&cfg) {
            Ok(out) if out.report.is_clean() && out.report.contraction == 0 => {}
            Ok(out) => dirty.push(format!("instance {}: {}", cfg.instance_seed, out.report.summary())),
            Err(e) => dirty.push(format!("instance {}: {e}", cfg.instance_seed)),
        }
    }
    let detail = if dirty.is_empty() {
        "10 instances clean".to_string()
    } else {
        dirty.join("; ")
    };
    check("aqgd-quadratic-invariants", dirty.is_empty(), detail)
}

fn noisy_run(seed: u64) -> VerifyCheck {
    let cfg = ExperimentConfig {
        dim: 10,
        kappa: 10.0,
        bits: Some(8),
        algorithm: Algorithm::Naqgd,
        noise: NoiseKind::Manual,
        noise_eps: 0.05,
        noise_decay: 0.99,
        iters: 800,
        instance_seed: seed,
        seed,
        ..ExperimentConfig::default()
    };
    match run_experiment(&cfg) {
        Ok(out) => check(
            "naqgd-envelope",
            out.report.is_clean() && out.report.noisy_checks_asserted,
            out.report.summary(),
        ),
        Err(e) => check("naqgd-envelope", false, e.to_string()),
    }
}

fn net_run(seed: u64) -> VerifyCheck {
    let cfg = ExperimentConfig {
        dim: 2,
        kappa: 10.0,
        quantizer: QuantizerKind::Net,
        iters: 300,
        instance_seed: seed,
        seed,
        ..ExperimentConfig::default()
    };
    match run_experiment(&cfg) {
        Ok(out) => check("net-quantizer-run", out.report.is_clean(), out.report.summary()),
        Err(e) => check("net-quantizer-run", false, e.to_string()),
    }
}

fn lqr_gradients(seed: u64) -> VerifyCheck {
    let mut worst: f64 = 0.0;
    for s in 0..5 {
        let sys = random_stable_instance(2 + s as usize % 4, 1 + s as usize % 3, seed.wrapping_add(s), 0.8);
        let k = Matrix::zeros(sys.m(), sys.n());
        let g = lqr_grad(&sys, &k).expect("K = 0 is stabilizing");
        let h = 1e-5;
        let mut fd = Matrix::zeros(sys.m(), sys.n());
        for i in 0..sys.m() {
            for j in 0..sys.n() {
                let mut kp = k.clone();
                let mut km = k.clone();
                kp[(i, j)] += h;
                km[(i, j)] -= h;
                fd[(i, j)] = (lqr_cost(&sys, &kp).unwrap() - lqr_cost(&sys, &km).unwrap()) / (2.0 * h);
            }
        }
        worst = worst.max((&g - &fd).norm() / g.norm());
    }
    check(
        "lqr-gradient-fd",
        worst <= 1e-5,
        format!("worst relative error {worst:e}"),
    )
}

fn csv_and_bits(seed: u64) -> VerifyCheck {
    let cfg = ExperimentConfig {
        dim: 7,
        bits: Some(6),
        iters: 120,
        instance_seed: seed,
        ..ExperimentConfig::default()
    };
    let out = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => return check("csv-and-bits", false, e.to_string()),
    };
    let parsed = read_csv(out.trace.to_csv_string().as_bytes());
    let round_trip = parsed.as_ref().is_ok_and(|r| *r == out.trace.records);
    let bits = out.trace.total_bits() == 120 * 7 * 6;
    check(
        "csv-and-bits",
        round_trip && bits && out.report.bits == 0,
        format!("round trip {round_trip}, total bits {}", out.trace.total_bits()),
    )
}

/// The invariant suite run by `aqgd verify`.
pub fn verify_suite(seed: u64) -> Vec<VerifyCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        quantizer_contraction(&mut rng),
        quadratic_runs(seed),
        noisy_run(seed),
        net_run(seed),
        lqr_gradients(seed),
        csv_and_bits(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in verify_suite(3) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
