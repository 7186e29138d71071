//! Uniform per-component quantizer on `[-R, R]` with `2^b` equal bins.
//!
//! Bins are half-open `[lo, hi)` except the last, which is closed, so a value
//! sitting exactly on a boundary goes to the upper bin. Encoder and decoder
//! both reconstruct through [`bin_center`], which keeps them bit-identical.

use super::frame::{pack_bits, unpack_bits, CodeFrame};
use super::{euclidean_norm, QuantizeError};

pub const MAX_SCALAR_BITS: u32 = 52;

fn check_bits(bits: u32) -> Result<(), QuantizeError> {
    if (1..=MAX_SCALAR_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(QuantizeError::InvalidBits(bits))
    }
}

pub(crate) fn check_range(range: f64) -> Result<(), QuantizeError> {
    if range.is_finite() && range >= 0.0 {
        Ok(())
    } else {
        Err(QuantizeError::InvalidRange(range))
    }
}

/// Worst-case relative error `√d / 2^b` of the scalar quantizer.
pub fn scalar_gamma(dim: usize, bits: u32) -> f64 {
    (dim as f64).sqrt() / 2f64.powi(bits as i32)
}

#[inline]
pub fn bin_center(idx: u64, range: f64, bits: u32) -> f64 {
    let width = 2.0 * range / 2f64.powi(bits as i32);
    -range + (idx as f64 + 0.5) * width
}

fn bin_index(x: f64, range: f64, bits: u32) -> u64 {
    let levels = 1u64 << bits;
    let top = levels - 1;
    let width = 2.0 * range / 2f64.powi(bits as i32);
    let guess = ((x + range) / width).floor();
    let guess = if guess.is_nan() || guess < 0.0 {
        0
    } else if guess >= top as f64 {
        top
    } else {
        guess as u64
    };
    // Settle floating-point wobble near boundaries: take the nearest center
    // among the neighbours, ties to the upper bin.
    let mut best = guess;
    let mut best_err = (x - bin_center(guess, range, bits)).abs();
    for cand in [guess.saturating_sub(1), (guess + 1).min(top)] {
        let err = (x - bin_center(cand, range, bits)).abs();
        if err < best_err || (err == best_err && cand > best) {
            best = cand;
            best_err = err;
        }
    }
    best
}

/// Encodes `x` (with `‖x‖ ≤ range`) per component; returns the frame and the
/// reconstruction the server will decode.
pub fn scalar_encode(x: &[f64], range: f64, bits: u32) -> Result<(CodeFrame, Vec<f64>), QuantizeError> {
    check_bits(bits)?;
    check_range(range)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(QuantizeError::NonFinite);
    }
    let norm = euclidean_norm(x);
    if norm > range {
        return Err(QuantizeError::Overflow { norm, range });
    }
    if range == 0.0 {
        return Ok((CodeFrame::zeros(x.len() * bits as usize), vec![0.0; x.len()]));
    }
    let idx: Vec<u64> = x.iter().map(|&v| bin_index(v, range, bits)).collect();
    let xhat = idx.iter().map(|&i| bin_center(i, range, bits)).collect();
    Ok((pack_bits(&idx, bits)?, xhat))
}

pub fn scalar_decode(frame: &CodeFrame, range: f64, bits: u32, dim: usize) -> Result<Vec<f64>, QuantizeError> {
    check_bits(bits)?;
    check_range(range)?;
    let idx = unpack_bits(frame, bits, dim)?;
    if range == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    Ok(idx.into_iter().map(|i| bin_center(i, range, bits)).collect())
}
