//! Reproducible random-number streams.
//!
//! Every random decision in a run draws from a ChaCha8 stream keyed by
//! `(master seed, generation, slot)`. Particles use their own index as
//! the slot and resampling uses a reserved slot, so results are
//! bit-identical no matter how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Slot reserved for the resampling draw of each generation.
pub const RESAMPLE_SLOT: u64 = u64::MAX;

/// Slot reserved for miscellaneous per-generation draws (none currently).
pub const AUX_SLOT: u64 = u64::MAX - 1;

pub type SubRng = ChaCha8Rng;

/// Finalization mix from splitmix64; decorrelates nearby keys.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one (generation, slot) cell of a run.
pub fn substream(master_seed: u64, generation: u64, slot: u64) -> SubRng {
    let mut seed = [0u8; 32];
    let a = mix(master_seed);
    let b = mix(a ^ mix(generation));
    let c = mix(b ^ mix(slot));
    let d = mix(c ^ 0x6a09_e667_f3bc_c908);
    seed[0..8].copy_from_slice(&a.to_le_bytes());
    seed[8..16].copy_from_slice(&b.to_le_bytes());
    seed[16..24].copy_from_slice(&c.to_le_bytes());
    seed[24..32].copy_from_slice(&d.to_le_bytes());
    SubRng::from_seed(seed)
}

/// Plain seeded stream for code outside the sampler loop (simulations, tests).
pub fn seeded(seed: u64) -> SubRng {
    SubRng::seed_from_u64(seed)
}

/// Derived scalar seed, for handing a child task (for example one
/// calibration replicate) its own master seed.
pub fn derive_seed(master_seed: u64, stream: u64) -> u64 {
    mix(mix(master_seed) ^ mix(stream))
}
