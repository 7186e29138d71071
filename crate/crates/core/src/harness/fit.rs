use std::ops::Range;

use super::experiment::{run_experiment, RunSummary};
use super::{ExperimentConfig, HarnessError};
use crate::optimize::RunTrace;

pub const MIN_FIT_POINTS: usize = 10;

/// Least-squares fit of `ln(gap_t) ≈ c + slope·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Per-iteration log-decay; negative when converging.
    pub slope: f64,
    pub r_squared: f64,
    /// Half-open iteration window the fit used.
    pub window: (usize, usize),
    pub points: usize,
}

/// Fits over the strictly positive, finite gaps with `t` in `window`.
pub fn fit_gaps(gaps: &[f64], window: Range<usize>) -> Result<RateFit, HarnessError> {
    let end = window.end.min(gaps.len());
    let pts: Vec<(f64, f64)> = (window.start..end)
        .filter(|&t| gaps[t] > 0.0 && gaps[t].is_finite())
        .map(|t| (t as f64, gaps[t].ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(HarnessError::Fit(format!(
            "{} positive gaps in [{}, {end}), need {MIN_FIT_POINTS}",
            pts.len(),
            window.start
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit {
        slope,
        r_squared,
        window: (window.start, end),
        points: pts.len(),
    })
}

pub fn fit_rate(trace: &RunTrace, window: Range<usize>) -> Result<RateFit, HarnessError> {
    fit_gaps(&trace.gaps(), window)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateComparison {
    pub a: RunSummary,
    pub b: RunSummary,
    pub fit_a: RateFit,
    pub fit_b: RateFit,
    /// `slope_a / slope_b`; 1 means identical exponents.
    pub slope_ratio: f64,
    pub final_gap_ratio: f64,
}

/// Runs both configurations and compares their fitted exponents on `window`.
pub fn compare_rates(
    a: &ExperimentConfig,
    b: &ExperimentConfig,
    window: Range<usize>,
) -> Result<RateComparison, HarnessError> {
    let ra = run_experiment(a)?;
    let rb = run_experiment(b)?;
    let fit_a = fit_rate(&ra.trace, window.clone())?;
    let fit_b = fit_rate(&rb.trace, window)?;
    Ok(RateComparison {
        slope_ratio: fit_a.slope / fit_b.slope,
        final_gap_ratio: ra.summary.final_gap / rb.summary.final_gap,
        a: ra.summary,
        b: rb.summary,
        fit_a,
        fit_b,
    })
}
