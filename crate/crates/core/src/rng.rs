//! Seeded randomness shared by every stochastic step.
//!
//! All shuffles, weight initialisation and dropout masks draw from
//! PCG-XSL-RR-128/64 (`Pcg64`), seeded through `SeedableRng::seed_from_u64`.
//! Shuffling is an explicit Fisher-Yates pass with `next_u64() % (i + 1)` so
//! the permutation for a given seed is stable across library versions and
//! reproducible from other languages.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub type SeededRng = Pcg64;

pub fn seeded(seed: u64) -> SeededRng {
    Pcg64::seed_from_u64(seed)
}

/// In-place Fisher-Yates shuffle, walking from the last index down.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn unit_f64<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
