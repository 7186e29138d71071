//! Reference loops used as controls against the adaptive schemes.

use super::trace::{LoopKind, RunTrace, TraceRecord};
use super::{norm, GradOracle, OptimizeError};
use crate::quantize::QuantizerSpec;

fn empty_trace(kind: LoopKind, alpha: f64, oracle: &impl GradOracle, gamma: f64, frame_bits: usize) -> RunTrace {
    RunTrace {
        kind,
        alpha,
        gamma,
        smoothness: oracle.smoothness(),
        pl_constant: oracle.pl_constant(),
        frame_bits,
        eps: None,
        records: Vec::new(),
        clipped: 0,
    }
}

fn record(t: usize, gap: f64, grad_norm: f64, range: f64, bits: u64) -> TraceRecord {
    TraceRecord {
        t,
        f_gap: gap,
        grad_norm,
        range,
        innov_norm: None,
        e_norm: None,
        potential: gap,
        bits_cum: bits,
    }
}

/// Same guard as the adaptive loop: a non-finite gap or growth past 1e6× the start.
fn guard(t: usize, gap: f64, initial: f64) -> Result<(), OptimizeError> {
    if !gap.is_finite() || (initial > 0.0 && gap > 1e6 * initial) {
        return Err(OptimizeError::Diverged { t, gap, initial });
    }
    Ok(())
}

/// `x_{t+1} = x_t − α∇f(x_t)` with no channel at all.
pub fn gd_unquantized<O: GradOracle>(
    oracle: &O,
    x0: &[f64],
    alpha: f64,
    iters: usize,
) -> Result<RunTrace, OptimizeError> {
    let mut trace = empty_trace(LoopKind::Gd, alpha, oracle, 0.0, 0);
    let mut x = x0.to_vec();
    for t in 0..=iters {
        let gap = oracle.gap(&x)?;
        guard(t, gap, trace.records.first().map_or(gap, |r| r.f_gap))?;
        let g = oracle.grad(&x)?;
        trace.records.push(record(t, gap, norm(&g), 0.0, 0));
        if t < iters {
            x.iter_mut().zip(&g).for_each(|(x, g)| *x -= alpha * g);
        }
    }
    Ok(trace)
}

/// Quantizes the gradient itself on a fixed ball of radius `range`, clipping
/// radially when the gradient falls outside it. The quantization error never
/// shrinks, so this loop stalls at a floor set by `γ·range`.
pub fn gd_static_quantized<O: GradOracle>(
    oracle: &O,
    quant: &QuantizerSpec,
    x0: &[f64],
    alpha: f64,
    range: f64,
    iters: usize,
) -> Result<RunTrace, OptimizeError> {
    let mut trace = empty_trace(LoopKind::StaticGd, alpha, oracle, quant.gamma(), quant.frame_bits());
    let mut x = x0.to_vec();
    let mut bits = 0u64;
    for t in 0..=iters {
        let gap = oracle.gap(&x)?;
        guard(t, gap, trace.records.first().map_or(gap, |r| r.f_gap))?;
        let mut g = oracle.grad(&x)?;
        let gn = norm(&g);
        trace.records.push(record(t, gap, gn, range, bits));
        if t == iters {
            break;
        }
        if gn > range {
            let s = range / gn * (1.0 - 4.0 * f64::EPSILON);
            g.iter_mut().for_each(|v| *v *= s);
            trace.clipped += 1;
        }
        let sent = quant.encode(&g, range)?;
        let decoded = quant.decode(&sent.frame, range)?;
        bits += sent.frame.bit_len() as u64;
        x.iter_mut().zip(&decoded).for_each(|(x, g)| *x -= alpha * g);
    }
    Ok(trace)
}
