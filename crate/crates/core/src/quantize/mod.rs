//! Quantizer maps for a bit-limited channel.
//!
//! Both families satisfy `‖Q(x) − x‖ ≤ γ·R` for every `‖x‖ ≤ R`, and both
//! produce a [`CodeFrame`] whose length depends only on the quantizer, never
//! on the input.

mod frame;
mod net;
mod scalar;

use std::sync::Arc;

use thiserror::Error;

pub use frame::{pack_bits, unpack_bits, CodeFrame};
pub use net::{build_net, net_decode, net_quantize, Codebook, NetOptions};
pub use scalar::{bin_center, scalar_decode, scalar_encode, scalar_gamma, MAX_SCALAR_BITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("input norm {norm:e} exceeds quantizer range {range:e}")]
    Overflow { norm: f64, range: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported bit width {0}")]
    InvalidBits(u32),
    #[error("range must be finite and nonnegative, got {0}")]
    InvalidRange(f64),
    #[error("gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("net dimension {0} outside 1..=6")]
    InvalidDimension(usize),
    #[error("non-finite input")]
    NonFinite,
    #[error("index {index} does not fit in {bits} bits")]
    IndexOverflow { index: u64, bits: u32 },
    #[error("frame too short: need {needed} bits, have {available}")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("frame length mismatch: expected {expected} bits, got {got}")]
    FrameLength { expected: usize, got: usize },
    #[error("frame padding bits are not zero")]
    NonZeroPadding,
    #[error("codebook would hold {size} points, above the cap {cap}")]
    CodebookCap { size: usize, cap: usize },
    #[error("net failed covering check: sample at distance {worst:e} > gamma {gamma:e}")]
    CoveringFailed { worst: f64, gamma: f64 },
    #[error("codebook index {index} out of range for {size} codewords")]
    UnknownCodeword { index: u64, size: usize },
}

pub(crate) fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantizerFamily {
    ScalarUniform { bits: u32 },
    Net(Arc<Codebook>),
}

/// A fully specified quantizer: family, dimension and contraction factor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    family: QuantizerFamily,
    dim: usize,
    gamma: f64,
}

/// Output of one encode call: what goes on the wire and what it decodes to.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub frame: CodeFrame,
    pub xhat: Vec<f64>,
}

impl QuantizerSpec {
    /// Scalar quantizer with `γ = √d / 2^b`.
    pub fn scalar(dim: usize, bits: u32) -> Result<Self, QuantizeError> {
        if !(1..=MAX_SCALAR_BITS).contains(&bits) {
            return Err(QuantizeError::InvalidBits(bits));
        }
        Ok(Self {
            family: QuantizerFamily::ScalarUniform { bits },
            dim,
            gamma: scalar_gamma(dim, bits),
        })
    }

    pub fn net(codebook: Codebook) -> Self {
        Self {
            dim: codebook.dim(),
            gamma: codebook.gamma(),
            family: QuantizerFamily::Net(Arc::new(codebook)),
        }
    }

    pub fn family(&self) -> &QuantizerFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Bits per channel use; fixed for the lifetime of the spec.
    pub fn frame_bits(&self) -> usize {
        match &self.family {
            QuantizerFamily::ScalarUniform { bits } => self.dim * *bits as usize,
            QuantizerFamily::Net(cb) => cb.index_bits() as usize,
        }
    }

    pub fn encode(&self, x: &[f64], range: f64) -> Result<Quantized, QuantizeError> {
        if x.len() != self.dim {
            return Err(QuantizeError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let (frame, xhat) = match &self.family {
            QuantizerFamily::ScalarUniform { bits } => scalar_encode(x, range, *bits)?,
            QuantizerFamily::Net(cb) => net_quantize(x, range, cb)?,
        };
        Ok(Quantized { frame, xhat })
    }

    pub fn decode(&self, frame: &CodeFrame, range: f64) -> Result<Vec<f64>, QuantizeError> {
        match &self.family {
            QuantizerFamily::ScalarUniform { bits } => scalar_decode(frame, range, *bits, self.dim),
            QuantizerFamily::Net(cb) => net_decode(frame, range, cb),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_spec_gamma_is_exact() {
        let q = QuantizerSpec::scalar(20, 4).unwrap();
        assert_eq!(q.gamma(), 20f64.sqrt() / 16.0);
        assert_eq!(q.frame_bits(), 80);
        assert!(QuantizerSpec::scalar(3, 0).is_err());
        assert!(QuantizerSpec::scalar(3, 53).is_err());
    }

    #[test]
    fn spec_checks_dimension() {
        let q = QuantizerSpec::scalar(3, 4).unwrap();
        assert!(matches!(
            q.encode(&[0.0, 0.0], 1.0),
            Err(QuantizeError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn spec_round_trip_is_bit_identical() {
        let q = QuantizerSpec::scalar(3, 7).unwrap();
        let out = q.encode(&[0.1, -0.2, 0.3], 0.5).unwrap();
        let back = q.decode(&out.frame, 0.5).unwrap();
        assert!(back.iter().zip(&out.xhat).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(out.frame.bit_len(), q.frame_bits());
    }

    #[test]
    fn encode_is_deterministic() {
        let q = QuantizerSpec::scalar(4, 5).unwrap();
        let x = [0.31, -0.07, 0.2, -0.55];
        let a = q.encode(&x, 0.9).unwrap();
        let b = q.encode(&x, 0.9).unwrap();
        assert_eq!(a.frame.to_bytes(), b.frame.to_bytes());
    }
}
