//! Re-derives the per-step guarantees from a finished trace.
//!
//! Every inequality except the overflow check carries `REL_SLACK` of relative
//! headroom for floating-point rounding; overflow is checked exactly.

use super::bounds::{bar_epsilon_sq_series, contraction_factor, naqgd_envelope};
use super::trace::{LoopKind, RunTrace};

pub const REL_SLACK: f64 = 1e-12;

fn within(lhs: f64, rhs: f64, scale: f64) -> bool {
    lhs <= rhs + REL_SLACK * scale.abs() + f64::MIN_POSITIVE
}

/// Violation counts per guarantee; `violations()` sums the asserted ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvariantReport {
    pub steps: usize,
    /// `‖i_t‖ > R_t`.
    pub overflow: usize,
    /// Exact loop: `‖∇f(x_t) − g_t‖ > γR_t`.
    pub quantization_error: usize,
    /// Exact loop: `R²_{t+1} > 8γ²R²_t + 2α²L²‖∇f(x_t)‖²` (needs `αL ≤ 1`).
    pub range_growth: usize,
    /// Exact loop: `V_{t+1} > max(1 − αμ/2, 9γ²)·V_t` (needs `αL ≤ 1/6`).
    pub contraction: usize,
    /// Exact loop: gap above `(1 − αμ/2)^t V_0`.
    pub rate_envelope: usize,
    pub rate_envelope_asserted: bool,
    /// Noisy loop: `‖e_t‖ > γR_t + ε_t`.
    pub noisy_error: usize,
    /// Noisy loop: gap above `max{(1 − αμ/3)^t z_0, 15ε̄²_{t−1}/μ}`.
    pub noisy_envelope: usize,
    /// Noisy loop: `V_{t+1} > max{(1 − αμ/3)V_t, 15(8ε²_{t−1} + 6ε²_t)/μ}`.
    pub noisy_contraction: usize,
    pub noisy_checks_asserted: bool,
    /// `bits_cum ≠ t·frame_bits`.
    pub bits: usize,
    /// Steps where the potential grew; informational.
    pub potential_increases: usize,
    pub notes: Vec<String>,
}

impl InvariantReport {
    pub fn violations(&self) -> usize {
        let mut total = self.overflow + self.quantization_error + self.range_growth + self.contraction + self.bits;
        if self.rate_envelope_asserted {
            total += self.rate_envelope;
        }
        if self.noisy_checks_asserted {
            total += self.noisy_error + self.noisy_envelope + self.noisy_contraction;
        }
        total
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }

    pub fn summary(&self) -> String {
        format!(
            "steps={} overflow={} quant_err={} range={} contraction={} rate_env={}{} noisy_err={} noisy_env={} noisy_contr={}{} bits={} V_up={}",
            self.steps,
            self.overflow,
            self.quantization_error,
            self.range_growth,
            self.contraction,
            self.rate_envelope,
            if self.rate_envelope_asserted { "" } else { "(info)" },
            self.noisy_error,
            self.noisy_envelope,
            self.noisy_contraction,
            if self.noisy_checks_asserted { "" } else { "(info)" },
            self.bits,
            self.potential_increases,
        )
    }
}

/// Outcome of a per-step `V_{t+1} ≤ V_t` scan.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Steps compared.
    pub checked: usize,
    pub increases: usize,
    pub first_increase: Option<usize>,
    /// Steps skipped because the gradient had reached its rounding floor.
    pub below_floor: usize,
    pub worst_ratio: f64,
}

/// Scans for potential increases beyond `rel_tol`. A step from `t` is
/// compared only while `‖∇f(x_t)‖ > floor·‖∇f(x_0)‖`; below that every term of
/// the potential is rounding noise and `x_t` can no longer move reliably.
pub fn potential_monotonicity(trace: &RunTrace, rel_tol: f64, floor: f64) -> MonotonicityReport {
    let recs = &trace.records;
    let cutoff = floor * recs.first().map_or(0.0, |r| r.grad_norm);
    let mut rep = MonotonicityReport {
        checked: 0,
        increases: 0,
        first_increase: None,
        below_floor: 0,
        worst_ratio: 0.0,
    };
    for w in recs.windows(2) {
        if w[0].grad_norm <= cutoff {
            rep.below_floor += 1;
            continue;
        }
        rep.checked += 1;
        let ratio = w[1].potential / w[0].potential;
        rep.worst_ratio = rep.worst_ratio.max(ratio);
        if w[1].potential > w[0].potential * (1.0 + rel_tol) {
            rep.increases += 1;
            rep.first_increase.get_or_insert(w[0].t);
        }
    }
    rep
}

pub fn check_trace(trace: &RunTrace) -> InvariantReport {
    let mut rep = InvariantReport {
        steps: trace.len().saturating_sub(1),
        ..Default::default()
    };
    let recs = &trace.records;
    for r in recs {
        if r.bits_cum != r.t as u64 * trace.frame_bits as u64 {
            rep.bits += 1;
        }
    }
    if !matches!(trace.kind, LoopKind::Aqgd | LoopKind::Naqgd) {
        return rep;
    }
    let alpha = trace.alpha;
    let gamma = trace.gamma;
    let lip = trace.smoothness;
    let mu = trace.pl_constant;

    for w in recs.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        if let Some(i) = cur.innov_norm {
            if i > cur.range {
                rep.overflow += 1;
            }
        }
        if !within(next.potential, cur.potential, cur.potential) {
            rep.potential_increases += 1;
        }
    }

    match trace.kind {
        LoopKind::Aqgd => check_exact(trace, &mut rep, alpha, gamma, lip, mu),
        LoopKind::Naqgd => check_noisy(trace, &mut rep, alpha, gamma, lip, mu),
        _ => unreachable!(),
    }
    rep
}

fn check_exact(trace: &RunTrace, rep: &mut InvariantReport, alpha: f64, gamma: f64, lip: f64, mu: Option<f64>) {
    let recs = &trace.records;
    for r in recs {
        if let Some(e) = r.e_norm {
            if !within(e, gamma * r.range, r.range + r.grad_norm) {
                rep.quantization_error += 1;
            }
        }
    }
    if alpha * lip <= 1.0 {
        for w in recs.windows(2) {
            let rhs = 8.0 * gamma * gamma * w[0].range.powi(2) + 2.0 * (alpha * lip * w[0].grad_norm).powi(2);
            if !within(w[1].range.powi(2), rhs, rhs) {
                rep.range_growth += 1;
            }
        }
    } else {
        rep.notes.push(format!(
            "alpha*L = {:e} > 1: range-growth bound not applicable",
            alpha * lip
        ));
    }
    let Some(mu) = mu else {
        rep.notes
            .push("no gradient-domination constant: contraction checks skipped".into());
        return;
    };
    if alpha * lip > 1.0 / 6.0 * (1.0 + REL_SLACK) {
        rep.notes
            .push(format!("alpha*L = {:e} > 1/6: contraction checks skipped", alpha * lip));
        return;
    }
    let factor = contraction_factor(alpha, mu, gamma);
    for w in recs.windows(2) {
        if !within(w[1].potential, factor * w[0].potential, w[0].potential) {
            rep.contraction += 1;
        }
    }
    let rate = 1.0 - alpha * mu / 2.0;
    rep.rate_envelope_asserted = 9.0 * gamma * gamma <= rate;
    let v0 = recs[0].potential;
    let mut env = v0;
    for r in recs {
        if !within(r.f_gap, env, env) {
            rep.rate_envelope += 1;
        }
        env *= rate;
    }
    if !rep.rate_envelope_asserted {
        rep.notes.push(format!(
            "9*gamma^2 = {:.4} above 1 - alpha*mu/2: rate envelope informational",
            9.0 * gamma * gamma
        ));
    }
}

fn check_noisy(trace: &RunTrace, rep: &mut InvariantReport, alpha: f64, gamma: f64, lip: f64, mu: Option<f64>) {
    let recs = &trace.records;
    let Some(eps) = trace.eps.as_deref() else {
        rep.notes.push("noisy trace without a schedule".into());
        return;
    };
    for r in recs {
        if let Some(e) = r.e_norm {
            let rhs = gamma * r.range + eps[r.t];
            if !within(e, rhs, rhs + r.grad_norm) {
                rep.noisy_error += 1;
            }
        }
    }
    let Some(mu) = mu else {
        rep.notes
            .push("no gradient-domination constant: envelope skipped".into());
        return;
    };
    let mut ok = true;
    if alpha * lip > 1.0 / 6.0 * (1.0 + REL_SLACK) {
        rep.notes
            .push(format!("alpha*L = {:e} > 1/6: envelope informational", alpha * lip));
        ok = false;
    }
    if 9.0 * gamma * gamma > 1.0 {
        rep.notes
            .push(format!("gamma = {gamma:.4} > 1/3: envelope informational"));
        ok = false;
    }
    rep.noisy_checks_asserted = ok;
    let bar = bar_epsilon_sq_series(&eps[..recs.len()], alpha, mu);
    let z0 = recs[0].f_gap;
    let rho = 1.0 - alpha * mu / 3.0;
    for r in recs {
        let prev = if r.t == 0 { 0.0 } else { bar[r.t - 1] };
        let env = naqgd_envelope(z0, r.t, alpha, mu, prev);
        if !within(r.f_gap, env, env) {
            rep.noisy_envelope += 1;
        }
    }
    // The recursion needs a lagged iterate, so it starts at t = 1.
    for w in recs.windows(2).skip(1) {
        let t = w[0].t;
        let noise = 15.0 * (8.0 * eps[t - 1] * eps[t - 1] + 6.0 * eps[t] * eps[t]) / mu;
        let rhs = (rho * w[0].potential).max(noise);
        if !within(w[1].potential, rhs, rhs) {
            rep.noisy_contraction += 1;
        }
    }
}
