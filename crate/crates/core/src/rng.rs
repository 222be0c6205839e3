//! Seedable uniform random streams with keyed substreams.
//!
//! Each stream is a ChaCha12 generator whose 256-bit key is derived by
//! SHA-256 from the parent key and a label, so a substream depends only on
//! `(seed, label path)` and never on how far the parent has advanced.
//! ChaCha output is specified bit-for-bit and identical on every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RngError {
    #[error("invalid integer range: {a} > {c}")]
    IntRange { a: i64, c: i64 },
    #[error("invalid float range: need finite a < c, got [{a}, {c})")]
    FloatRange { a: f64, c: f64 },
}

const ROOT_DOMAIN: &[u8] = b"nbbox/root/v1";
const CHILD_DOMAIN: &[u8] = b"nbbox/substream/v1";

/// A deterministic uniform random stream.
///
/// Not `Sync`-shared by design of the API: every draw takes `&mut self`.
/// Clone a stream to fork an identical copy of its current position.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    key: [u8; 32],
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(ROOT_DOMAIN);
        h.update(seed.to_le_bytes());
        Self::from_key(seed, h.finalize().into())
    }

    fn from_key(seed: u64, key: [u8; 32]) -> Self {
        Self { seed, key, rng: ChaCha12Rng::from_seed(key) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by this stream's identity and `label`.
    ///
    /// Independent of how many values the parent has drawn.
    pub fn substream(&self, label: impl AsRef<[u8]>) -> Self {
        let label = label.as_ref();
        let mut h = Sha256::new();
        h.update(CHILD_DOMAIN);
        h.update(self.key);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label);
        Self::from_key(self.seed, h.finalize().into())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in the inclusive range `[a, c]`.
    pub fn rand_int(&mut self, a: i64, c: i64) -> Result<i64, RngError> {
        if a > c {
            return Err(RngError::IntRange { a, c });
        }
        let span = (c as i128 - a as i128 + 1) as u128;
        if span > u64::MAX as u128 {
            return Ok(self.next_u64() as i64);
        }
        let span = span as u64;
        // rejection sampling on the largest multiple of `span`
        let zone = u64::MAX - (u64::MAX - span + 1) % span;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return Ok((a as i128 + (v % span) as i128) as i64);
            }
        }
    }

    /// Uniform real in the half-open range `[a, c)`.
    pub fn rand_float(&mut self, a: f64, c: f64) -> Result<f64, RngError> {
        if !(a.is_finite() && c.is_finite() && a < c) {
            return Err(RngError::FloatRange { a, c });
        }
        let u = self.unit_f64();
        let x = a + u * (c - a);
        // a + u(c-a) can round up to c when u is within an ulp of 1
        Ok(if x >= c { c.next_down().max(a) } else { x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_int_range() {
        let mut s = RngStream::new(3);
        for _ in 0..100 {
            assert_eq!(s.rand_int(5, 5).unwrap(), 5);
        }
    }

    #[test]
    fn invalid_ranges() {
        let mut s = RngStream::new(0);
        assert_eq!(s.rand_int(2, 1), Err(RngError::IntRange { a: 2, c: 1 }));
        assert!(s.rand_float(1.0, 1.0).is_err());
        assert!(s.rand_float(1.0, 0.0).is_err());
        assert!(s.rand_float(f64::NAN, 1.0).is_err());
        assert!(s.rand_float(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn int_frequencies() {
        let mut s = RngStream::new(11);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[(s.rand_int(-1, 1).unwrap() + 1) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
        let mean = (0..n).map(|_| s.rand_int(-2, 2).unwrap() as f64).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn float_range_and_mean() {
        let mut s = RngStream::new(5);
        for _ in 0..100_000 {
            let x = s.rand_float(0.99, 1.01).unwrap();
            assert!((0.99..1.01).contains(&x));
        }
        let n = 100_000;
        let mean = (0..n).map(|_| s.rand_float(0.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn float_kolmogorov_smirnov() {
        let mut s = RngStream::new(77);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| s.rand_float(-0.01, 0.01).unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x + 0.01) / 0.02;
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // 99% critical value 1.628 / sqrt(n)
        assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn substream_determinism_and_independence_from_parent_position() {
        let root = RngStream::new(42);
        let mut advanced = root.clone();
        for _ in 0..17 {
            advanced.next_u64();
        }
        let mut a = root.substream("P0001.txt");
        let mut b = advanced.substream("P0001.txt");
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = root.substream("P0002.txt");
        let mut d = root.substream("P0001.txt");
        assert_ne!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn substream_golden_sequence() {
        let mut s = RngStream::new(42).substream("golden");
        let draws: Vec<i64> = (0..10).map(|_| s.rand_int(0, 9).unwrap()).collect();
        assert_eq!(draws, GOLDEN_0_9);
    }

    // recorded once from this generator; changing the derivation breaks golden files
    const GOLDEN_0_9: [i64; 10] = [7, 4, 0, 3, 8, 4, 7, 0, 5, 6];
}
