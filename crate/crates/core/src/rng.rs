//! Seed derivation. Every random stream is a function of a root seed plus
//! the identity of the item being processed, never of processing order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::fnv1a64;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A generator keyed by `(seed, domain)` on stream `index`.
pub fn derived(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ fnv1a64(domain.as_bytes())));
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: u64 = derived(7, "x", 0).gen();
        let b: u64 = derived(7, "x", 1).gen();
        let c: u64 = derived(7, "y", 0).gen();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derived(7, "x", 0).gen::<u64>());
    }
}
