use aqgd_core::linalg::{op_norm, Matrix};
use aqgd_core::lqr::{
    closed_loop, epsilon_schedule, estimate_gradient, evaluate_policy, lqr_cost, lqr_grad, optimal_policy,
    random_stable_instance, random_stable_instance_with, rollout, rollout_cost, trajectory_rng, EstimatorConfig,
    LqrConstants, LtiSystem, ScheduleInputs,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn central_difference(sys: &LtiSystem, k: &Matrix, h: f64) -> Matrix {
    Matrix::from_fn(k.nrows(), k.ncols(), |i, j| {
        let mut kp = k.clone();
        let mut km = k.clone();
        kp[(i, j)] += h;
        km[(i, j)] -= h;
        (lqr_cost(sys, &kp).unwrap() - lqr_cost(sys, &km).unwrap()) / (2.0 * h)
    })
}

/// Gains with `J(K) ≤ J̄`, drawn around the optimum at a spread of radii.
fn sublevel_samples(sys: &LtiSystem, j_bar: f64, count: usize, seed: u64) -> Vec<Matrix> {
    let opt = optimal_policy(sys, 1e-12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < count && tries < 100 * count {
        tries += 1;
        let dir = gaussian(sys.m(), sys.n(), &mut rng);
        let k = &opt.gain + dir.normalize() * rng.random_range(0.0..1.5);
        if lqr_cost(sys, &k).is_ok_and(|j| j <= j_bar) {
            out.push(k);
        }
    }
    assert_eq!(out.len(), count, "sublevel set too thin to sample");
    out
}

#[test]
fn gradient_matches_central_differences_on_twenty_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for s in 0..20u64 {
        let n = 1 + (s as usize % 5);
        let m = 1 + (s as usize % 3);
        let sys = random_stable_instance(n, m, 100 + s, rng.random_range(0.2..0.9));
        // A small random gain keeps the closed loop stable but off the K = 0 corner.
        let k = loop {
            let k = gaussian(m, n, &mut rng) * 0.05;
            if lqr_cost(&sys, &k).is_ok() {
                break k;
            }
        };
        let g = lqr_grad(&sys, &k).unwrap();
        let fd = central_difference(&sys, &k, 1e-5);
        worst = worst.max((&g - &fd).norm() / g.norm());
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn scalar_closed_forms() {
    let one = Matrix::identity(1, 1);
    let sys = LtiSystem::new(one.clone() * 0.5, one.clone(), one.clone(), one.clone(), one).unwrap();
    let k = Matrix::zeros(1, 1);
    assert!((lqr_cost(&sys, &k).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert!((lqr_grad(&sys, &k).unwrap()[(0, 0)] - 16.0 / 9.0).abs() < 1e-10);
}

#[test]
fn worked_constants() {
    let c = LqrConstants::new(1.0, 1.0, 1.0, 1.0, 4.0, 4);
    assert_eq!((c.zeta, c.eta, c.mu, c.radius), (2.0, 0.875, 0.5, 0.125));
    assert_eq!(c.lipschitz, 2048.0);
    assert!((c.grad_bound - 8.0 * 20f64.sqrt()).abs() < 1e-12);
    assert_eq!(c.smoothness, 229_376.0);
    assert!(c.zeta >= 1.0 && c.eta > 0.0 && c.eta < 1.0);
}

#[test]
fn sublevel_set_properties_hold_on_samples() {
    for (seed, scale) in [(1u64, 1.0), (2, 5.0), (3, 1.0)] {
        let sys = random_stable_instance_with(3, 2, seed, 0.7, scale, scale, 1.0);
        let c = LqrConstants::from_system(&sys, &Matrix::zeros(2, 3), None).unwrap();
        let opt = optimal_policy(&sys, 1e-12).unwrap();
        for k in sublevel_samples(&sys, c.j_bar, 40, seed) {
            let eval = evaluate_policy(&sys, &k).unwrap();
            let a_k = closed_loop(&sys, &k);
            let mut power = Matrix::identity(3, 3);
            for step in 0..=50 {
                assert!(
                    op_norm(&power) <= c.zeta * c.eta.powi(step) * (1.0 + 1e-12),
                    "decay fails at k = {step}"
                );
                power = &a_k * power;
            }
            let g = lqr_grad(&sys, &k).unwrap();
            let gap = eval.cost - opt.cost;
            assert!(g.norm_squared() >= 2.0 * c.mu * gap, "gradient domination");
            assert!(g.norm() <= c.grad_bound, "gradient bound");
            assert!(op_norm(&eval.p) <= c.cost_to_go_bound(), "cost-to-go bound");
        }
    }
}

/// `E Σ_{k<N} x_kᵀ M x_k = N·J − tr(P Σ_N)` from the origin, with `Σ_N` the state covariance.
fn finite_horizon_mean(sys: &LtiSystem, k: &Matrix, horizon: usize) -> f64 {
    let eval = evaluate_policy(sys, k).unwrap();
    let a_k = closed_loop(sys, k);
    let mut cov = Matrix::zeros(sys.n(), sys.n());
    for _ in 0..horizon {
        cov = &a_k * cov * a_k.transpose() + sys.sigma_w();
    }
    horizon as f64 * eval.cost - (&eval.p * cov).trace()
}

#[test]
fn rollout_costs_match_the_exact_finite_horizon_mean() {
    let sys = random_stable_instance_with(2, 1, 7, 0.6, 1.0, 1.0, 1.0);
    let k = Matrix::from_row_slice(1, 2, &[0.1, -0.2]);
    let horizon = 40;
    let runs = 100_000u64;
    let samples: Vec<f64> = (0..runs)
        .map(|i| rollout_cost(&sys, &k, horizon, &mut trajectory_rng(5, 0, i)).unwrap() / horizon as f64)
        .collect();
    let mean = samples.iter().sum::<f64>() / runs as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    let se = (var / runs as f64).sqrt();
    let exact = finite_horizon_mean(&sys, &k, horizon) / horizon as f64;
    assert!((mean - exact).abs() <= 3.0 * se, "mean {mean}, exact {exact}, se {se}");
}

#[test]
fn truncation_and_state_bounds_hold_on_rollouts() {
    let sys = random_stable_instance_with(3, 2, 9, 0.6, 1.0, 1.0, 1.0);
    let c = LqrConstants::from_system(&sys, &Matrix::zeros(2, 3), None).unwrap();
    let gains = sublevel_samples(&sys, c.j_bar, 5, 9);
    let horizon = 60;
    for (g, k) in gains.iter().enumerate() {
        let mut max_w_sq = 0.0;
        let runs = 2000;
        for i in 0..runs {
            let ro = rollout(&sys, k, horizon, &mut trajectory_rng(13, g as u64, i)).unwrap();
            let mut running_max: f64 = 0.0;
            let mut worst_w: f64 = 0.0;
            for s in 0..horizon {
                let x = Matrix::from_column_slice(3, 1, &ro.states[s]);
                let u = Matrix::from_column_slice(2, 1, &ro.inputs[s]);
                let next = Matrix::from_column_slice(3, 1, &ro.states[s + 1]);
                let w = next - sys.a() * x - sys.b() * u;
                running_max = running_max.max(w.norm());
                worst_w = worst_w.max(w.norm_squared());
                let xn = ro.states[s + 1].iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(
                    xn <= c.state_gain() * running_max * (1.0 + 1e-12),
                    "state bound at step {}",
                    s + 1
                );
            }
            max_w_sq += worst_w;
        }
        let truncation = horizon as f64 * lqr_cost(&sys, k).unwrap() - finite_horizon_mean(&sys, k, horizon);
        let bound = 2.0 * c.beta1 * c.zeta.powi(6) / (1.0 - c.eta).powi(3) * max_w_sq / runs as f64;
        assert!(
            truncation >= 0.0 && truncation <= bound,
            "truncation {truncation} vs bound {bound}"
        );
    }
}

#[test]
fn noise_schedule_matches_an_independent_evaluation() {
    let c = LqrConstants::new(1.0, 1.0, 1.0, 1.0, 4.0, 5);
    let inputs = ScheduleInputs {
        m: 3,
        n: 5,
        radius: 0.1,
        trajectories: 10_000,
        horizon: 10_000,
        iterations: 40,
        delta: 0.1,
        trace_sigma: 5.0,
    };
    // Evaluated separately in 40-digit arithmetic.
    let expected = 11_493_959.255_707_955;
    let got = epsilon_schedule(&c, &inputs).total();
    assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
    let bias = 25_645.016_420_349_588;
    assert!((epsilon_schedule(&c, &inputs).bias - bias).abs() <= 1e-12 * bias);
}

#[test]
fn noise_schedule_reduces_to_the_bias_in_the_limit() {
    let c = LqrConstants::new(1.0, 1.0, 1.0, 1.0, 4.0, 5);
    let huge = ScheduleInputs {
        m: 3,
        n: 5,
        radius: 0.1,
        trajectories: 1usize << 60,
        horizon: 1usize << 60,
        iterations: 40,
        delta: 0.1,
        trace_sigma: 5.0,
    };
    let e = epsilon_schedule(&c, &huge);
    assert!((e.total() - e.bias).abs() <= 1e-3 * e.bias, "{e:?}");
}

#[test]
fn estimates_are_bit_identical_for_equal_seeds() {
    let sys = random_stable_instance(4, 2, 3, 0.5);
    let k = Matrix::zeros(2, 4);
    let cfg = EstimatorConfig {
        trajectories: 64,
        horizon: 50,
        radius: 0.1,
        seed: 17,
    };
    let a = estimate_gradient(&sys, &k, &cfg, 3).unwrap();
    let b = estimate_gradient(&sys, &k, &cfg, 3).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
    let other = estimate_gradient(&sys, &k, &EstimatorConfig { seed: 18, ..cfg }, 3).unwrap();
    assert_ne!(a.as_slice(), other.as_slice());
}
