//! Seed derivation and uniform sampling on top of SplitMix64.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub type Stream = SplitMix64;

/// Child seed for a named purpose, so independent consumers of one master
/// seed never share draws.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut s = SplitMix64::seed_from_u64(master ^ h.rotate_left(17));
    s.next_u64()
}

pub fn substream(master: u64, label: &str) -> Stream {
    SplitMix64::seed_from_u64(derive_seed(master, label))
}

/// Uniform draw from `[0, 1)` with 53 random bits.
pub fn unit<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw from `[lo, hi]`.
pub fn uniform<R: RngCore>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// Standard normal by Box–Muller.
pub fn normal<R: RngCore>(rng: &mut R) -> f64 {
    let u1 = 1.0 - unit(rng);
    let u2 = unit(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}
