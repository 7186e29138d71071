//! ε-net quantizer on the unit ball.
//!
//! The codebook is a greedy farthest-point packing over a dense seeded
//! candidate cloud. Every selected point is farther than the stopping radius
//! from all earlier ones, so the codebook is a packing; once no candidate is
//! left uncovered it is also a covering, which fresh samples then confirm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::frame::{pack_bits, unpack_bits, CodeFrame};
use super::scalar::check_range;
use super::{euclidean_norm, QuantizeError};

pub const MAX_NET_DIM: usize = 6;

/// Unit-ball codewords stored row-major; index 0 is the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    points: Vec<f64>,
    dim: usize,
    gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetOptions {
    pub cap: usize,
    pub candidates: Option<usize>,
    pub seed: u64,
    pub verify_samples: usize,
}

impl Default for NetOptions {
    fn default() -> Self {
        Self {
            cap: 4096,
            candidates: None,
            seed: 0x05ee_d0e7,
            verify_samples: 100_000,
        }
    }
}

impl Codebook {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// `⌈log₂ |C|⌉`; a single codeword needs no bits at all.
    pub fn index_bits(&self) -> u32 {
        match self.len() {
            0 | 1 => 0,
            n => usize::BITS - (n - 1).leading_zeros(),
        }
    }

    /// Packing-volume bound `(2/γ + 1)^d` on the number of codewords.
    pub fn size_bound(dim: usize, gamma: f64) -> f64 {
        (2.0 / gamma + 1.0).powi(dim as i32)
    }

    /// Nearest codeword by Euclidean distance, ties to the lower index.
    pub fn nearest(&self, y: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.points().enumerate() {
            let d2: f64 = c.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }
}

fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, on_sphere: bool, out: &mut Vec<f64>) {
    let start = out.len();
    loop {
        out.truncate(start);
        out.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = euclidean_norm(&out[start..]);
        if n > 1e-12 {
            let radius = if on_sphere {
                1.0
            } else {
                rng.random::<f64>().powf(1.0 / dim as f64)
            };
            out[start..].iter_mut().for_each(|v| *v *= radius / n);
            return;
        }
    }
}

fn farthest_point(cloud: &[f64], dim: usize, stop: f64) -> Vec<f64> {
    let count = cloud.len() / dim;
    let mut chosen: Vec<f64> = vec![0.0; dim];
    let mut gap: Vec<f64> = cloud.chunks_exact(dim).map(|p| p.iter().map(|v| v * v).sum()).collect();
    let stop2 = stop * stop;
    loop {
        let (far, &far_gap) = gap
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("candidate cloud is never empty");
        if far_gap <= stop2 {
            return chosen;
        }
        let new = cloud[far * dim..(far + 1) * dim].to_vec();
        for (i, g) in gap.iter_mut().enumerate().take(count) {
            let p = &cloud[i * dim..(i + 1) * dim];
            let d2: f64 = p.iter().zip(&new).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < *g {
                *g = d2;
            }
        }
        chosen.extend_from_slice(&new);
    }
}

/// Builds a γ-net of the unit ball in `dim ≤ 6` dimensions.
pub fn build_net(dim: usize, gamma: f64, opts: &NetOptions) -> Result<Codebook, QuantizeError> {
    if !(1..=MAX_NET_DIM).contains(&dim) {
        return Err(QuantizeError::InvalidDimension(dim));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(QuantizeError::InvalidGamma(gamma));
    }
    let bound = Codebook::size_bound(dim, gamma);
    if bound > opts.cap as f64 {
        return Err(QuantizeError::CodebookCap {
            size: bound.floor() as usize,
            cap: opts.cap,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut n_cand = opts
        .candidates
        .unwrap_or_else(|| (20_000 + 40 * bound as usize).min(250_000));
    let mut stop = 0.9 * gamma;
    let mut worst_seen = f64::INFINITY;
    for _ in 0..4 {
        let mut cloud = Vec::with_capacity(n_cand * dim);
        for k in 0..n_cand {
            sample_ball(&mut rng, dim, k % 4 == 0, &mut cloud);
        }
        let points = farthest_point(&cloud, dim, stop);
        let book = Codebook { points, dim, gamma };
        if book.len() as f64 > bound.floor() || book.len() > opts.cap {
            return Err(QuantizeError::CodebookCap {
                size: book.len(),
                cap: opts.cap.min(bound.floor() as usize),
            });
        }
        let mut probe = Vec::with_capacity(dim);
        let mut worst: f64 = 0.0;
        for _ in 0..opts.verify_samples {
            probe.clear();
            sample_ball(&mut rng, dim, false, &mut probe);
            worst = worst.max(book.nearest(&probe).1);
        }
        if worst <= gamma {
            return Ok(book);
        }
        worst_seen = worst;
        stop *= 0.95;
        n_cand *= 2;
    }
    Err(QuantizeError::CoveringFailed {
        worst: worst_seen,
        gamma,
    })
}

/// Encodes `x` as the index of the codeword nearest to `x / R`.
pub fn net_quantize(x: &[f64], range: f64, book: &Codebook) -> Result<(CodeFrame, Vec<f64>), QuantizeError> {
    check_range(range)?;
    if x.len() != book.dim {
        return Err(QuantizeError::DimensionMismatch {
            expected: book.dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(QuantizeError::NonFinite);
    }
    let norm = euclidean_norm(x);
    if norm > range {
        return Err(QuantizeError::Overflow { norm, range });
    }
    let bits = book.index_bits();
    if range == 0.0 {
        return Ok((CodeFrame::zeros(bits as usize), vec![0.0; book.dim]));
    }
    let scaled: Vec<f64> = x.iter().map(|v| v / range).collect();
    let (idx, _) = book.nearest(&scaled);
    let frame = pack_bits(&[idx as u64], bits)?;
    Ok((frame, reconstruct(book, idx, range)))
}

fn reconstruct(book: &Codebook, idx: usize, range: f64) -> Vec<f64> {
    book.point(idx).iter().map(|c| range * c).collect()
}

pub fn net_decode(frame: &CodeFrame, range: f64, book: &Codebook) -> Result<Vec<f64>, QuantizeError> {
    check_range(range)?;
    let bits = book.index_bits();
    let idx = unpack_bits(frame, bits, 1)?[0];
    if idx as usize >= book.len() {
        return Err(QuantizeError::UnknownCodeword {
            index: idx,
            size: book.len(),
        });
    }
    if range == 0.0 {
        return Ok(vec![0.0; book.dim]);
    }
    Ok(reconstruct(book, idx as usize, range))
}
