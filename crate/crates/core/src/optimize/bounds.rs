//! Closed-form rates, thresholds and potentials used to certify runs.

/// Contraction factor γ of the scalar quantizer needed for rate preservation:
/// `9γ² ≤ 1 − 1/(12κ)`.
pub fn rate_preserving(gamma: f64, kappa: f64) -> bool {
    9.0 * gamma * gamma <= 1.0 - 1.0 / (12.0 * kappa)
}

/// Smallest bit width `b ≥ 1` with `9·d/4^b ≤ 1 − 1/(12κ)`.
pub fn rate_threshold_b(dim: usize, kappa: f64) -> u32 {
    assert!(kappa > 1.0, "condition number must exceed 1");
    let rhs = 1.0 - 1.0 / (12.0 * kappa);
    (1u32..)
        .find(|&b| 9.0 * dim as f64 / 4f64.powi(b as i32) <= rhs)
        .expect("threshold exists for finite dimension")
}

/// Largest covering ratio `(1 − 1/κ)/3` a rate-preserving net may use.
pub fn net_gamma(kappa: f64) -> f64 {
    (1.0 - 1.0 / kappa) / 3.0
}

/// Presentation form `⌈C·log₂(dκ/(κ−1))⌉` of the same threshold; only the
/// operative condition in [`rate_threshold_b`] is enforced anywhere.
pub fn log_form_bits(dim: usize, kappa: f64, c: f64) -> u32 {
    (c * (dim as f64 * kappa / (kappa - 1.0)).log2()).ceil().max(1.0) as u32
}

/// Default step for exact gradients.
pub fn guaranteed_step(smoothness: f64) -> f64 {
    1.0 / (6.0 * smoothness)
}

/// Default step for noisy gradients on a locally smooth objective.
pub fn noisy_guaranteed_step(smoothness: f64, radius: f64, grad_bound: f64) -> f64 {
    (radius / (7.0 * grad_bound)).min(guaranteed_step(smoothness))
}

/// Per-step potential contraction factor guaranteed when `αL ≤ 1/6`.
pub fn contraction_factor(alpha: f64, mu: f64, gamma: f64) -> f64 {
    (1.0 - alpha * mu / 2.0).max(9.0 * gamma * gamma)
}

pub fn aqgd_potential(gap: f64, alpha: f64, range: f64) -> f64 {
    gap + alpha * range * range
}

/// Lagged potential for the noisy loop; pass zeros for the `t = 0` lag.
pub fn naqgd_potential(gap: f64, prev_gap: f64, alpha: f64, prev_range: f64) -> f64 {
    gap + prev_gap + alpha * prev_range * prev_range
}

/// `max_{s ≤ t} ρ^{t−s}(8ε²_{s−1} + 6ε²_s)` with `ρ = 1 − αμ/3` and `ε_{−1} = 0`.
pub fn bar_epsilon_sq(eps: &[f64], t: usize, alpha: f64, mu: f64) -> f64 {
    let rho = 1.0 - alpha * mu / 3.0;
    (0..=t)
        .map(|s| {
            let prev = if s == 0 { 0.0 } else { eps[s - 1] };
            rho.powi((t - s) as i32) * (8.0 * prev * prev + 6.0 * eps[s] * eps[s])
        })
        .fold(0.0, f64::max)
}

/// Running values of [`bar_epsilon_sq`] for every `t < eps.len()`, in O(T).
pub fn bar_epsilon_sq_series(eps: &[f64], alpha: f64, mu: f64) -> Vec<f64> {
    let rho = 1.0 - alpha * mu / 3.0;
    let mut acc = 0.0f64;
    eps.iter()
        .enumerate()
        .map(|(s, &e)| {
            let prev = if s == 0 { 0.0 } else { eps[s - 1] };
            acc = (rho * acc).max(8.0 * prev * prev + 6.0 * e * e);
            acc
        })
        .collect()
}

/// Gap envelope for the noisy loop at iteration `t`.
pub fn naqgd_envelope(initial_gap: f64, t: usize, alpha: f64, mu: f64, bar_sq_prev: f64) -> f64 {
    let rho = 1.0 - alpha * mu / 3.0;
    (rho.powi(t as i32) * initial_gap).max(15.0 * bar_sq_prev / mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn thresholds() {
        assert_eq!(rate_threshold_b(1, 1e12), 2);
        assert_eq!(rate_threshold_b(4, 100.0), 3);
        assert_eq!(rate_threshold_b(20, 100.0), 4);
        assert_eq!(rate_threshold_b(50, 100.0), 5);
        assert!(rate_preserving(20f64.sqrt() / 16.0, 100.0));
        assert!(!rate_preserving(20f64.sqrt() / 8.0, 100.0));
    }

    #[test]
    fn net_gamma_is_rate_preserving() {
        assert!((net_gamma(10.0) - 0.3).abs() < 1e-15);
        for k in [1.5, 10.0, 1e3] {
            assert!(rate_preserving(net_gamma(k), k));
        }
    }

    #[test]
    fn potentials() {
        assert_eq!(aqgd_potential(0.0, 0.3, 0.0), 0.0);
        assert_relative_eq!(aqgd_potential(1.0, 1.0 / 6.0, 3.0), 2.5, epsilon = 1e-15);
        assert_eq!(naqgd_potential(0.7, 0.0, 0.1, 0.0), 0.7);
    }

    #[test]
    fn bar_epsilon_examples() {
        let e = 0.3;
        let eps = vec![e; 6];
        for t in 1..6 {
            assert_relative_eq!(bar_epsilon_sq(&eps, t, 0.1, 0.5), 14.0 * e * e, epsilon = 1e-15);
        }
        assert_relative_eq!(bar_epsilon_sq(&eps, 0, 0.1, 0.5), 6.0 * e * e);
        // (1 − αμ/3) = 0.9
        assert_relative_eq!(bar_epsilon_sq(&[1.0, 0.0], 1, 0.3, 1.0), 8.0);
        assert_relative_eq!(bar_epsilon_sq(&[0.0, 1.0, 0.0], 2, 0.3, 1.0), 8.0);
    }

    proptest! {
        #[test]
        fn series_matches_direct(eps in proptest::collection::vec(0.0f64..2.0, 1..40), am in 0.01f64..2.9) {
            let series = bar_epsilon_sq_series(&eps, am, 1.0);
            for (t, s) in series.iter().enumerate() {
                let direct = bar_epsilon_sq(&eps, t, am, 1.0);
                prop_assert!((s - direct).abs() <= 1e-12 * direct.max(1e-300));
            }
        }

        #[test]
        fn threshold_monotone(d in 1usize..200, k1 in 1.001f64..1e4, k2 in 1.001f64..1e4) {
            let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
            prop_assert!(rate_threshold_b(d, hi) <= rate_threshold_b(d, lo));
            prop_assert!(rate_threshold_b(d, lo) <= rate_threshold_b(d + 1, lo));
            let b = rate_threshold_b(d, lo);
            prop_assert!(rate_preserving((d as f64).sqrt() / 2f64.powi(b as i32), lo));
            if b > 1 {
                prop_assert!(!rate_preserving((d as f64).sqrt() / 2f64.powi(b as i32 - 1), lo));
            }
        }
    }
}
