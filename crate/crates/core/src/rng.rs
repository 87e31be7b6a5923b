//! Counter-based random streams.
//!
//! Every stochastic unit of work (a bootstrap replication, a simulated data
//! set) gets its own ChaCha stream addressed by `(seed, index)`, so results do
//! not depend on the order or thread in which units are evaluated.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream `index` of the generator family identified by `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fill `out` with Rademacher (±1) draws.
pub fn rademacher(rng: &mut impl RngCore, out: &mut [f64]) {
    let mut bits = 0u64;
    for (i, slot) in out.iter_mut().enumerate() {
        if i % 64 == 0 {
            bits = rng.next_u64();
        }
        *slot = if bits & 1 == 1 { 1.0 } else { -1.0 };
        bits >>= 1;
    }
}

/// Sign pattern number `pattern` over `n` clusters: bit `g` set means +1.
pub fn sign_pattern(pattern: u64, out: &mut [f64]) {
    for (g, slot) in out.iter_mut().enumerate() {
        *slot = if (pattern >> g) & 1 == 1 { 1.0 } else { -1.0 };
    }
}
