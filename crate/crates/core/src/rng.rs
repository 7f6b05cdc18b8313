//! Counter-based random streams.
//!
//! Every Gaussian used by the simulation is a pure function of
//! `(seed, channel, step, index, draw)`, computed with Philox4x32-10. Streams
//! need no shared state, so any partition of particles across workers yields
//! the same numbers.

use core::f64::consts::PI;

use crate::math::{ln, sin_cos, sqrt};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 bijection with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finalizer, used to derive independent 64-bit seeds.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of tags, e.g.
/// `(N, replication)`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(seed), |acc, &t| mix64(acc ^ mix64(t)))
}

/// Independent noise sources. Each channel is a disjoint slice of the
/// counter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Channel {
    /// `B^i`: the component that is reflected for the particle system.
    Reflected = 0,
    /// `B̃^i`: the component shared verbatim by both processes.
    Synchronous = 1,
    /// Noise of the reference ensemble approximating the nonlinear law.
    Reference = 2,
    /// Initial draws shared by both components under synchronous coupling.
    InitShared = 3,
    InitNonlinear = 4,
    InitParticles = 5,
    InitReference = 6,
    /// Plain particle-system runs.
    Particles = 7,
    Validation = 8,
    Bootstrap = 9,
}

/// A short stream of uniforms/Gaussians addressed by
/// `(seed, channel, step, index)`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    key: [u32; 2],
    counter: [u32; 4],
    buffer: [u32; 4],
    used: usize,
    spare: Option<f64>,
}

impl NoiseStream {
    pub fn new(seed: u64, channel: Channel, step: u64, index: u64) -> Self {
        debug_assert!(step <= u64::from(u32::MAX) && index <= u64::from(u32::MAX));
        NoiseStream {
            key: [seed as u32, (seed >> 32) as u32],
            counter: [0, channel as u32, index as u32, step as u32],
            buffer: [0; 4],
            used: 4,
            spare: None,
        }
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.buffer = philox4x32_10(self.counter, self.key);
            self.counter[0] = self.counter[0].wrapping_add(1);
            self.used = 0;
        }
        let v = self.buffer[self.used];
        self.used += 1;
        v
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        let hi = u64::from(self.next_u32());
        let lo = u64::from(self.next_u32());
        let bits = ((hi << 32) | lo) >> 11;
        (bits as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller; the second variate is cached.
    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = sqrt(-2.0 * ln(u1));
        let (s, c) = sin_cos(2.0 * PI * u2);
        self.spare = Some(r * s);
        r * c
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.gaussian();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors from the Random123 distribution (kat_vectors).
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn streams_are_addressable() {
        let mut a = NoiseStream::new(7, Channel::Reflected, 3, 11);
        let mut b = NoiseStream::new(7, Channel::Reflected, 3, 11);
        let mut c = NoiseStream::new(7, Channel::Synchronous, 3, 11);
        let xa: Vec<f64> = (0..5).map(|_| a.gaussian()).collect();
        let xb: Vec<f64> = (0..5).map(|_| b.gaussian()).collect();
        let xc: Vec<f64> = (0..5).map(|_| c.gaussian()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn gaussian_moments() {
        let n = 200_000;
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let z = NoiseStream::new(99, Channel::Validation, 0, i).gaussian();
            s1 += z;
            s2 += z * z;
            s4 += z * z * z * z;
        }
        let n = n as f64;
        assert!((s1 / n).abs() < 4.0 / n.sqrt());
        assert!((s2 / n - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
        assert!((s4 / n - 3.0).abs() < 4.0 * (96.0 / n).sqrt());
    }

    #[test]
    fn uniform_stays_open() {
        let mut s = NoiseStream::new(0, Channel::Validation, 0, 0);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[16, 0]);
        let b = derive_seed(1, &[16, 1]);
        let c = derive_seed(1, &[64, 0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(1, &[16, 0]));
    }
}
