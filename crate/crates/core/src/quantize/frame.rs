use super::QuantizeError;

/// A packed bit string as it crosses the channel.
///
/// Bits are stored MSB-first inside each byte; the unused low bits of the
/// final byte are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodeFrame {
    payload: Vec<u8>,
    bit_len: usize,
}

impl CodeFrame {
    pub fn zeros(bit_len: usize) -> Self {
        Self {
            payload: vec![0; bit_len.div_ceil(8)],
            bit_len,
        }
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.payload[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    fn set_bit(&mut self, i: usize) {
        self.payload[i / 8] |= 1 << (7 - i % 8);
    }

    /// `"101001"`-style rendering, mostly for tests and debugging.
    pub fn bit_string(&self) -> String {
        (0..self.bit_len).map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }

    /// Length-prefixed wire form: 4-byte little-endian bit count, then payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.payload.len());
        out.extend_from_slice(&(self.bit_len as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, QuantizeError> {
        if bytes.len() < 4 {
            return Err(QuantizeError::TruncatedFrame {
                needed: 32,
                available: bytes.len() * 8,
            });
        }
        let bit_len = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
        let body = &bytes[4..];
        let need = bit_len.div_ceil(8);
        if body.len() != need {
            return Err(QuantizeError::TruncatedFrame {
                needed: need * 8,
                available: body.len() * 8,
            });
        }
        if !bit_len.is_multiple_of(8) && need > 0 {
            let pad_mask = (1u8 << (8 - bit_len % 8)) - 1;
            if body[need - 1] & pad_mask != 0 {
                return Err(QuantizeError::NonZeroPadding);
            }
        }
        Ok(Self {
            payload: body.to_vec(),
            bit_len,
        })
    }
}

/// Packs `indices` as consecutive `bits`-wide big-endian fields.
pub fn pack_bits(indices: &[u64], bits: u32) -> Result<CodeFrame, QuantizeError> {
    if bits > 64 {
        return Err(QuantizeError::InvalidBits(bits));
    }
    let mut frame = CodeFrame::zeros(indices.len() * bits as usize);
    let mut pos = 0;
    for &idx in indices {
        if bits < 64 && idx >> bits != 0 {
            return Err(QuantizeError::IndexOverflow { index: idx, bits });
        }
        for k in (0..bits).rev() {
            if (idx >> k) & 1 == 1 {
                frame.set_bit(pos);
            }
            pos += 1;
        }
    }
    Ok(frame)
}

/// Inverse of [`pack_bits`]; the frame must hold exactly `count · bits` bits.
pub fn unpack_bits(frame: &CodeFrame, bits: u32, count: usize) -> Result<Vec<u64>, QuantizeError> {
    if bits > 64 {
        return Err(QuantizeError::InvalidBits(bits));
    }
    let needed = count * bits as usize;
    if frame.bit_len() < needed {
        return Err(QuantizeError::TruncatedFrame {
            needed,
            available: frame.bit_len(),
        });
    }
    if frame.bit_len() != needed {
        return Err(QuantizeError::FrameLength {
            expected: needed,
            got: frame.bit_len(),
        });
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0;
    for _ in 0..count {
        let mut v = 0u64;
        for _ in 0..bits {
            v = (v << 1) | frame.bit(pos) as u64;
            pos += 1;
        }
        out.push(v);
    }
    Ok(out)
}
