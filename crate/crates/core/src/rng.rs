//! Counter-based random streams.
//!
//! Every replica owns independent ChaCha8 substreams keyed by
//! `(master_seed, replica_id)` with the ChaCha stream word set to a
//! `stream_id`. Noise driving the particle and the membrane modes never
//! share a stream, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::{lit, Scalar};

pub type StreamRng = ChaCha8Rng;

/// Membrane-mode (OU) increments.
pub const STREAM_ETA: u64 = 1;
/// Particle Brownian increments.
pub const STREAM_NOISE: u64 = 2;
/// Initial conditions (stationary draws, rejection sampling).
pub const STREAM_INIT: u64 = 3;
/// Auxiliary draws used by oracles and diagnostics.
pub const STREAM_AUX: u64 = 4;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream for `(master_seed, replica_id, stream_id)`.
pub fn substream(master_seed: u64, replica_id: u64, stream_id: u64) -> StreamRng {
    let mut state = master_seed ^ replica_id.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream_id);
    rng
}

#[inline]
pub fn normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = rng.sample(StandardNormal);
    lit(z)
}

#[inline]
pub fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u: f64 = rng.random();
    lit(u)
}
