//! Deterministic seed fan-out. Every random decision in a run is drawn from a
//! ChaCha8 stream whose 64-bit seed is mixed from the master seed plus a
//! domain tag and a few indices, so any piece of work (a data sample, a model
//! init, one epoch's shuffle) can be regenerated in isolation, in any order,
//! on any thread count, and produce identical bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep unrelated streams apart even when their indices collide.
pub const DOM_DATA: u64 = 0x4441_5441; // dataset sample ICs
pub const DOM_INIT: u64 = 0x494e_4954; // model parameter init
pub const DOM_SCHED: u64 = 0x5343_4844; // per-step curriculum coin flips
pub const DOM_SHUF: u64 = 0x5348_5546; // per-epoch batch shuffling
pub const DOM_TRAIN: u64 = 0x5452_4e53; // per-model training stream root

/// One round of the splitmix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold an ordered list of parts into one well-spread 64-bit seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0x632b_e59b_d9b4_e019u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

pub fn rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}
