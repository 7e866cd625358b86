//! Deterministic random streams and seed derivation.
//!
//! The generator is xoshiro256** seeded through SplitMix64. Gaussian
//! variates use the Marsaglia polar method; bounded Gaussians are obtained
//! by rejection, never by clipping.
//!
//! Seeds are derived from `(base_seed, i_ms, i_md, rep)` only, so a given
//! grid cell and replication sees the same stream under every regime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default base seed used when none is configured.
pub const DEFAULT_BASE_SEED: u64 = 42;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford variant 13). Bijective on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    mix64(*state)
}

/// Identifies one replication of one grid cell.
///
/// The regime is deliberately absent: every regime replays the same streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub i_ms: u32,
    pub i_md: u32,
    pub rep: u32,
}

impl SeedSpec {
    pub fn new(base_seed: u64, i_ms: u32, i_md: u32, rep: u32) -> Self {
        Self { base_seed, i_ms, i_md, rep }
    }

    /// Packs the three indices into 64 bits: 12 bits each for the grid
    /// indices and 40 bits for the replication.
    ///
    /// Distinct triples within those widths pack to distinct words, and
    /// `mix64` is a bijection, so derived seeds are collision-free on the
    /// production domain (grids up to 4096 per axis, 2^40 replications).
    fn packed(&self) -> u64 {
        ((self.i_ms as u64 & 0xFFF) << 52) | ((self.i_md as u64 & 0xFFF) << 40) | (self.rep as u64 & 0xFF_FFFF_FFFF)
    }
}

/// Maps a [`SeedSpec`] to the 64-bit seed of its random stream.
///
/// `mix64(mix64(base_seed) ^ packed(i_ms, i_md, rep))`. For a fixed base
/// seed this is injective in the packed indices.
pub fn derive_seed(spec: SeedSpec) -> u64 {
    mix64(mix64(spec.base_seed) ^ spec.packed())
}

/// A single-owner xoshiro256** stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    s: [u64; 4],
    spare: Option<u64>,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let s = [splitmix64(&mut sm), splitmix64(&mut sm), splitmix64(&mut sm), splitmix64(&mut sm)];
        Self { s, spare: None }
    }

    pub fn from_spec(spec: SeedSpec) -> Self {
        Self::from_seed(derive_seed(spec))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`; returns `lo` when the interval is degenerate.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!("uniform: lo ({lo}) > hi ({hi})")));
        }
        let u = self.next_f64();
        let x = lo + (hi - lo) * u;
        // rounding can land exactly on hi for wide intervals
        Ok(if x >= hi && hi > lo { lo } else { x })
    }

    /// Standard normal variate (Marsaglia polar method).
    ///
    /// Each accepted pair yields two variates; the second is cached and
    /// returned by the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(bits) = self.spare.take() {
            return f64::from_bits(bits);
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let k = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some((v * k).to_bits());
                return u * k;
            }
        }
    }

    /// Standard normal resampled until it falls in `[lo, hi]`.
    pub fn truncated_gaussian(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("truncated_gaussian: lo ({lo}) >= hi ({hi})")));
        }
        if hi < -8.0 || lo > 8.0 {
            return Err(Error::InvalidArgument(format!(
                "truncated_gaussian: [{lo}, {hi}] has negligible standard-normal mass"
            )));
        }
        loop {
            let z = self.standard_normal();
            if z >= lo && z <= hi {
                return Ok(z);
            }
        }
    }
}
