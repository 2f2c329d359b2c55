//! Seeded, counter-based randomness with independent per-purpose streams.
//!
//! The generator is ChaCha20 keyed by the 64-bit seed (expanded with
//! `SeedableRng::seed_from_u64`); each [`Purpose`] selects a distinct ChaCha
//! stream id, and an item index (image number) is folded into the low 32 bits
//! of the stream id. Draws on one stream never shift another.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Purpose {
    /// Fresh carrier noise (MN magnitudes and unused channels).
    Noise = 1,
    /// Random signs of the MC projection.
    McSign = 2,
    /// Multi-channel codebooks.
    Codebook = 3,
    /// Filler bits and random test payloads.
    Payload = 4,
    /// Anything else (experiments, calibration).
    Aux = 5,
}

#[derive(Debug, Clone)]
pub struct StegoRng {
    inner: ChaCha20Rng,
}

impl StegoRng {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self::for_item(seed, purpose, 0)
    }

    /// Stream for `purpose` dedicated to item `index` (e.g. the i-th image).
    pub fn for_item(seed: u64, purpose: Purpose, index: u32) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(((purpose as u64) << 32) | index as u64);
        Self { inner }
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn bit(&mut self) -> u8 {
        (self.inner.next_u32() >> 31) as u8
    }

    /// `+1.0` or `-1.0` with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.bit() == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn bits(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.bit()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_equal_streams() {
        let mut a = StegoRng::new(42, Purpose::Noise);
        let mut b = StegoRng::new(42, Purpose::Noise);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn purposes_are_independent() {
        let mut noise = StegoRng::new(7, Purpose::Noise);
        let mut signs = StegoRng::new(7, Purpose::McSign);
        assert_ne!(noise.next_u64(), signs.next_u64());
        let mut a = StegoRng::for_item(7, Purpose::Noise, 0);
        let mut b = StegoRng::for_item(7, Purpose::Noise, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn pinned_first_draw() {
        // Guards against silent generator changes across dependency upgrades.
        let mut r = StegoRng::new(0, Purpose::Noise);
        assert_eq!(r.next_u64(), 15_545_416_049_366_935_172);
        let z = StegoRng::new(0, Purpose::Noise).normal();
        assert_eq!(z, 1.0338463023841282);
        let mut bits = StegoRng::new(1, Purpose::Payload);
        let ones: usize = bits.bits(10_000).iter().map(|&b| b as usize).sum();
        assert!((4_700..5_300).contains(&ones));
    }
}
