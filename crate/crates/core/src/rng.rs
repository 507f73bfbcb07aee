//! Keyed random substreams.
//!
//! Every random draw in a Monte Carlo run comes from a ChaCha8 generator
//! whose 256-bit seed is derived from `(seed, domain, a, b)`. Work units can
//! therefore be executed in any order or on any thread and still consume
//! exactly the same random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as SimRng;

/// Substream used for channel realizations.
pub const DOMAIN_CHANNEL: u64 = 1;
/// Substream used for data bits and noise of transmitted blocks.
pub const DOMAIN_BLOCK: u64 = 2;
/// Substream for test and probe draws.
pub const DOMAIN_PROBE: u64 = 3;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the substream keyed by `(seed, domain, a, b)`.
pub fn substream(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    // Absorb one key word per chunk; the last chunk only mixes.
    for (chunk, word) in key.chunks_exact_mut(8).zip([domain, a, b, 0]) {
        state ^= word;
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
