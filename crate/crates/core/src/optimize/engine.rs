use thiserror::Error;

use super::bounds::{aqgd_potential, naqgd_potential};
use super::trace::{LoopKind, RunTrace, TraceRecord};
use super::{norm, GradOracle, OptimizeError};
use crate::quantize::QuantizerSpec;

/// One end's view of the shared recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub g: Vec<f64>,
    pub range: f64,
}

impl Endpoint {
    fn bit_equal(&self, other: &Self) -> bool {
        self.range.to_bits() == other.range.to_bits()
            && self.g.len() == other.g.len()
            && self.g.iter().zip(&other.g).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Joint worker/server state. The two endpoints only ever exchange frames.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub t: usize,
    pub x: Vec<f64>,
    pub worker: Endpoint,
    pub server: Endpoint,
    pub bits_sent: u64,
    pub alpha: f64,
}

impl OptState {
    pub fn new(x0: Vec<f64>, r0: f64, alpha: f64) -> Self {
        let start = Endpoint {
            g: vec![0.0; x0.len()],
            range: r0,
        };
        Self {
            t: 0,
            x: x0,
            worker: start.clone(),
            server: start,
            bits_sent: 0,
            alpha,
        }
    }

    pub fn symmetric(&self) -> bool {
        self.worker.bit_equal(&self.server)
    }

    pub fn range(&self) -> f64 {
        self.server.range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverflowPolicy {
    /// Treat `‖i_t‖ > R_t` as a fatal contract violation.
    #[default]
    Fail,
    /// Shrink the innovation radially onto the range ball and count it.
    Clip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub innovation_norm: f64,
    /// `‖∇f(x_t) − g_t‖` against the exact gradient.
    pub e_norm: f64,
    pub frame_bits: usize,
    pub clipped: bool,
}

fn clip_into(v: &mut [f64], range: f64) {
    let n = norm(v);
    if range == 0.0 {
        v.iter_mut().for_each(|c| *c = 0.0);
        return;
    }
    let scale = range / n;
    v.iter_mut().for_each(|c| *c *= scale);
    while norm(v) > range {
        v.iter_mut().for_each(|c| *c *= 1.0 - f64::EPSILON);
    }
}

fn advance(
    state: &mut OptState,
    quant: &QuantizerSpec,
    smoothness: f64,
    exact: &[f64],
    sent: &[f64],
    extra_range: f64,
    policy: OverflowPolicy,
) -> Result<StepReport, OptimizeError> {
    let t = state.t;
    let mut innovation: Vec<f64> = sent.iter().zip(&state.worker.g).map(|(a, b)| a - b).collect();
    let innovation_norm = norm(&innovation);
    let mut clipped = false;
    if innovation_norm > state.worker.range {
        match policy {
            OverflowPolicy::Fail => {
                return Err(OptimizeError::Overflow {
                    t,
                    norm: innovation_norm,
                    range: state.worker.range,
                })
            }
            OverflowPolicy::Clip => {
                clip_into(&mut innovation, state.worker.range);
                clipped = true;
            }
        }
    }

    let encoded = quant.encode(&innovation, state.worker.range)?;
    let decoded = quant.decode(&encoded.frame, state.server.range)?;

    for (g, d) in state.worker.g.iter_mut().zip(&encoded.xhat) {
        *g += d;
    }
    for (g, d) in state.server.g.iter_mut().zip(&decoded) {
        *g += d;
    }
    for (x, g) in state.x.iter_mut().zip(&state.server.g) {
        *x -= state.alpha * g;
    }
    let gamma = quant.gamma();
    let step = state.alpha * smoothness;
    state.worker.range = gamma * state.worker.range + step * norm(&state.worker.g) + extra_range;
    state.server.range = gamma * state.server.range + step * norm(&state.server.g) + extra_range;
    if !state.symmetric() {
        return Err(OptimizeError::Asymmetric { t });
    }
    state.bits_sent += encoded.frame.bit_len() as u64;
    state.t += 1;

    let e: Vec<f64> = exact.iter().zip(&state.server.g).map(|(a, b)| a - b).collect();
    Ok(StepReport {
        innovation_norm,
        e_norm: norm(&e),
        frame_bits: encoded.frame.bit_len(),
        clipped,
    })
}

/// One exact-gradient step: `R_{t+1} = γR_t + αL‖g_t‖`.
pub fn aqgd_step<O: GradOracle>(
    state: &mut OptState,
    oracle: &O,
    quant: &QuantizerSpec,
) -> Result<StepReport, OptimizeError> {
    let grad = oracle.grad(&state.x)?;
    advance(
        state,
        quant,
        oracle.smoothness(),
        &grad,
        &grad,
        0.0,
        OverflowPolicy::Fail,
    )
}

/// One noisy-gradient step: the range gains `ε_t + ε_{t+1}`.
pub fn naqgd_step<O: GradOracle>(
    state: &mut OptState,
    oracle: &O,
    quant: &QuantizerSpec,
    eps_t: f64,
    eps_next: f64,
) -> Result<StepReport, OptimizeError> {
    let exact = oracle.grad(&state.x)?;
    let noisy = oracle.noisy_grad(&state.x, state.t)?;
    advance(
        state,
        quant,
        oracle.smoothness(),
        &exact,
        &noisy,
        eps_t + eps_next,
        OverflowPolicy::Fail,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: LoopKind,
    pub alpha: f64,
    pub r0: f64,
    pub iters: usize,
    /// `ε_0 … ε_T`; required by the noisy loop.
    pub eps: Option<Vec<f64>>,
    pub overflow: OverflowPolicy,
    /// Abort once the gap exceeds this multiple of the initial gap.
    pub divergence_factor: f64,
}

impl RunConfig {
    pub fn aqgd(alpha: f64, r0: f64, iters: usize) -> Self {
        Self {
            kind: LoopKind::Aqgd,
            alpha,
            r0,
            iters,
            eps: None,
            overflow: OverflowPolicy::Fail,
            divergence_factor: 1e6,
        }
    }

    pub fn naqgd(alpha: f64, r0: f64, iters: usize, eps: Vec<f64>) -> Self {
        Self {
            kind: LoopKind::Naqgd,
            eps: Some(eps),
            ..Self::aqgd(alpha, r0, iters)
        }
    }
}

/// Range and gradient norm below which a run stops early.
pub const PRECISION_FLOOR: f64 = 1e-140;

#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunError {
    pub error: OptimizeError,
    pub partial: Box<RunTrace>,
}

/// Runs `cfg.iters` steps from `x0`, recording every iterate.
pub fn run<O: GradOracle>(
    oracle: &O,
    quant: &QuantizerSpec,
    x0: &[f64],
    cfg: &RunConfig,
) -> Result<RunTrace, RunError> {
    let mut trace = RunTrace {
        kind: cfg.kind,
        alpha: cfg.alpha,
        gamma: quant.gamma(),
        smoothness: oracle.smoothness(),
        pl_constant: oracle.pl_constant(),
        frame_bits: quant.frame_bits(),
        eps: cfg.eps.clone(),
        records: Vec::with_capacity(cfg.iters + 1),
        clipped: 0,
    };
    match drive(oracle, quant, x0, cfg, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunError {
            error,
            partial: Box::new(trace),
        }),
    }
}

fn drive<O: GradOracle>(
    oracle: &O,
    quant: &QuantizerSpec,
    x0: &[f64],
    cfg: &RunConfig,
    trace: &mut RunTrace,
) -> Result<(), OptimizeError> {
    if x0.len() != oracle.dim() || quant.dim() != oracle.dim() {
        return Err(OptimizeError::InvalidConfig(format!(
            "dimensions disagree: x0 {}, oracle {}, quantizer {}",
            x0.len(),
            oracle.dim(),
            quant.dim()
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.r0 >= 0.0 && cfg.r0.is_finite()) {
        return Err(OptimizeError::InvalidConfig("need alpha > 0 and finite R0 >= 0".into()));
    }
    let zero = vec![0.0; cfg.iters + 1];
    let eps: &[f64] = match (cfg.kind, &cfg.eps) {
        (LoopKind::Gd | LoopKind::StaticGd, _) => {
            return Err(OptimizeError::InvalidConfig(
                "baseline loops run through their own entry points".into(),
            ))
        }
        (LoopKind::Aqgd, _) => &zero,
        (LoopKind::Naqgd, None) => {
            return Err(OptimizeError::InvalidConfig("noisy loop needs a noise schedule".into()))
        }
        (LoopKind::Naqgd, Some(e)) if e.len() < cfg.iters + 1 => {
            return Err(OptimizeError::ScheduleTooShort {
                need: cfg.iters + 1,
                got: e.len(),
            })
        }
        (LoopKind::Naqgd, Some(e)) => e,
    };
    let smoothness = oracle.smoothness();
    let mut state = OptState::new(x0.to_vec(), cfg.r0, cfg.alpha);
    let mut prev_gap = 0.0;
    let mut prev_range = 0.0;
    let mut initial_gap = None;

    for t in 0..=cfg.iters {
        let gap = oracle.gap(&state.x)?;
        let z0 = *initial_gap.get_or_insert(gap);
        if !gap.is_finite() || (z0 > 0.0 && gap > cfg.divergence_factor * z0) {
            return Err(OptimizeError::Diverged { t, gap, initial: z0 });
        }
        let exact = oracle.grad(&state.x)?;
        let range = state.range();
        let potential = match cfg.kind {
            LoopKind::Aqgd => aqgd_potential(gap, cfg.alpha, range),
            _ => naqgd_potential(gap, prev_gap, cfg.alpha, prev_range),
        };
        let mut record = TraceRecord {
            t,
            f_gap: gap,
            grad_norm: norm(&exact),
            range,
            innov_norm: None,
            e_norm: None,
            potential,
            bits_cum: state.bits_sent,
        };
        // Past the floor, squared norms leave the normal f64 range and the
        // per-step guarantees can no longer be resolved; the iterate is done.
        if t == cfg.iters || (range > 0.0 && range < PRECISION_FLOOR && record.grad_norm < PRECISION_FLOOR) {
            trace.records.push(record);
            break;
        }
        let report = match cfg.kind {
            LoopKind::Aqgd => advance(&mut state, quant, smoothness, &exact, &exact, 0.0, cfg.overflow),
            _ => {
                let noisy = oracle.noisy_grad(&state.x, t)?;
                advance(
                    &mut state,
                    quant,
                    smoothness,
                    &exact,
                    &noisy,
                    eps[t] + eps[t + 1],
                    cfg.overflow,
                )
            }
        };
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                trace.records.push(record);
                return Err(e);
            }
        };
        record.innov_norm = Some(report.innovation_norm);
        record.e_norm = Some(report.e_norm);
        trace.clipped += report.clipped as usize;
        trace.records.push(record);
        prev_gap = gap;
        prev_range = range;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::OracleError;

    /// `f(x) = ½ Σ h_i x_i²`.
    struct Diag(Vec<f64>);

    impl GradOracle for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn smoothness(&self) -> f64 {
            self.0.iter().cloned().fold(0.0, f64::max)
        }
        fn pl_constant(&self) -> Option<f64> {
            Some(self.0.iter().cloned().fold(f64::INFINITY, f64::min))
        }
        fn value(&self, x: &[f64]) -> Result<f64, OracleError> {
            Ok(0.5 * self.0.iter().zip(x).map(|(h, v)| h * v * v).sum::<f64>())
        }
        fn optimal_value(&self) -> Option<f64> {
            Some(0.0)
        }
        fn grad(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
            Ok(self.0.iter().zip(x).map(|(h, v)| h * v).collect())
        }
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let f = Diag(vec![1.0, 2.0]);
        let q = QuantizerSpec::scalar(2, 3).unwrap();
        let trace = run(&f, &q, &[0.0, 0.0], &RunConfig::aqgd(1.0 / 12.0, 0.0, 25)).unwrap();
        assert!(trace.records.iter().all(|r| r.f_gap == 0.0 && r.range == 0.0));
        assert_eq!(trace.total_bits(), 25 * 6);
    }

    #[test]
    fn single_step_matches_scripted_arithmetic() {
        let f = Diag(vec![1.0, 2.0]);
        let q = QuantizerSpec::scalar(2, 8).unwrap();
        let alpha = 1.0 / 12.0;
        let r0 = 5f64.sqrt();
        let mut s = OptState::new(vec![1.0, 1.0], r0, alpha);
        aqgd_step(&mut s, &f, &q).unwrap();

        // Scripted: grad (1, 2); bins of width 2R/256 on [-R, R].
        let width = 2.0 * r0 / 256.0;
        let centre = |v: f64| -r0 + (((v + r0) / width).floor() + 0.5) * width;
        let g = [centre(1.0), centre(2.0)];
        let x = [1.0 - alpha * g[0], 1.0 - alpha * g[1]];
        let r1 = q.gamma() * r0 + alpha * 2.0 * (g[0] * g[0] + g[1] * g[1]).sqrt();
        for i in 0..2 {
            assert!((s.server.g[i] - g[i]).abs() <= 1e-15);
            assert!((s.x[i] - x[i]).abs() <= 1e-15);
        }
        assert!((s.range() - r1).abs() <= 1e-15);
        assert_eq!(s.bits_sent, 16);
    }

    #[test]
    fn fine_quantizer_tracks_plain_descent() {
        let f = Diag(vec![1.0, 3.0, 10.0]);
        let q = QuantizerSpec::scalar(3, 52).unwrap();
        let alpha = 1.0 / 60.0;
        let x0 = [1.0, -2.0, 0.5];
        let r0 = norm(&f.grad(&x0).unwrap());
        let mut s = OptState::new(x0.to_vec(), r0, alpha);
        let mut plain = x0.to_vec();
        for _ in 0..100 {
            aqgd_step(&mut s, &f, &q).unwrap();
            let g = f.grad(&plain).unwrap();
            plain.iter_mut().zip(&g).for_each(|(x, g)| *x -= alpha * g);
        }
        for (a, b) in s.x.iter().zip(&plain) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_iterations_give_one_record() {
        let f = Diag(vec![1.0]);
        let q = QuantizerSpec::scalar(1, 4).unwrap();
        let trace = run(&f, &q, &[1.0], &RunConfig::aqgd(0.1, 1.0, 0)).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.total_bits(), 0);
        assert_eq!(trace.last().innov_norm, None);
    }

    #[test]
    fn noiseless_noisy_loop_is_bitwise_the_exact_loop() {
        let f = Diag(vec![1.0, 4.0, 9.0]);
        let q = QuantizerSpec::scalar(3, 5).unwrap();
        let x0 = [0.3, -0.2, 0.1];
        let r0 = norm(&f.grad(&x0).unwrap());
        let a = run(&f, &q, &x0, &RunConfig::aqgd(1.0 / 54.0, r0, 200)).unwrap();
        let b = run(&f, &q, &x0, &RunConfig::naqgd(1.0 / 54.0, r0, 200, vec![0.0; 201])).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.f_gap.to_bits(), rb.f_gap.to_bits());
            assert_eq!(ra.range.to_bits(), rb.range.to_bits());
        }
    }

    #[test]
    fn noisy_range_rule_arithmetic() {
        // γ = 0.25 (d = 1, b = 2), R = 1, αL = 1/6, ‖g‖ = 3 after the step.
        let q = QuantizerSpec::scalar(1, 2).unwrap();
        let mut s = OptState::new(vec![0.0], 1.0, 1.0 / 6.0);
        s.worker.g = vec![3.25];
        s.server.g = vec![3.25];
        // innovation −3.25 + ĝ; pick ĝ = 3.0 so i = −0.25 ↦ centre −0.25.
        struct Noisy;
        impl GradOracle for Noisy {
            fn dim(&self) -> usize {
                1
            }
            fn smoothness(&self) -> f64 {
                1.0
            }
            fn value(&self, _: &[f64]) -> Result<f64, OracleError> {
                Ok(0.0)
            }
            fn grad(&self, _: &[f64]) -> Result<Vec<f64>, OracleError> {
                Ok(vec![3.0])
            }
        }
        naqgd_step(&mut s, &Noisy, &q, 0.1, 0.2).unwrap();
        assert_eq!(s.server.g, vec![3.0]);
        assert!((s.range() - 1.05).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_fatal_unless_clipping() {
        let f = Diag(vec![1.0, 1.0]);
        let q = QuantizerSpec::scalar(2, 4).unwrap();
        let err = run(&f, &q, &[1.0, 1.0], &RunConfig::aqgd(0.1, 0.5, 5)).unwrap_err();
        assert!(matches!(err.error, OptimizeError::Overflow { t: 0, .. }));
        assert_eq!(err.partial.len(), 1);
        let cfg = RunConfig {
            overflow: OverflowPolicy::Clip,
            ..RunConfig::aqgd(0.1, 0.5, 5)
        };
        let trace = run(&f, &q, &[1.0, 1.0], &cfg).unwrap();
        assert!(trace.clipped >= 1);
    }

    #[test]
    fn runs_stop_at_the_precision_floor() {
        let f = Diag(vec![1.0, 1.5]);
        let q = QuantizerSpec::scalar(2, 12).unwrap();
        let trace = run(&f, &q, &[1.0, -1.0], &RunConfig::aqgd(1.0 / 9.0, 2.0, 20_000)).unwrap();
        let last = trace.last();
        assert!(trace.len() < 20_001);
        assert!(last.range < PRECISION_FLOOR && last.grad_norm < PRECISION_FLOOR);
        assert!(trace
            .records
            .iter()
            .rev()
            .skip(1)
            .all(|r| r.range >= PRECISION_FLOOR || r.grad_norm >= PRECISION_FLOOR));
        assert!(crate::optimize::invariants::check_trace(&trace).is_clean());
    }

    #[test]
    fn divergence_guard_trips() {
        let f = Diag(vec![1.0]);
        let q = QuantizerSpec::scalar(1, 10).unwrap();
        let err = run(&f, &q, &[1.0], &RunConfig::aqgd(3.0, 1.0, 500)).unwrap_err();
        assert!(matches!(err.error, OptimizeError::Diverged { .. }));
    }
}
