//! Seed derivation for the simulator's independent random streams.
//!
//! A run is keyed by one `u64` seed. Every subsystem that needs randomness
//! (world placement, avoidance turns, training shuffles, Byzantine payloads,
//! ...) draws from its own stream derived from `(seed, domain, index)`, so
//! adding or removing a consumer never perturbs the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Values are stable identifiers; never reorder.
#[derive(Debug, Clone, Copy)]
pub enum Domain {
    WorldPlacement = 1,
    Avoidance = 2,
    InitWeights = 3,
    Train = 4,
    Faulty = 5,
    Smart = 6,
    SealerPermutation = 7,
    Validation = 8,
    Bootstrap = 9,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `(seed, domain, index)` into a single well-distributed `u64`.
pub fn mix(seed: u64, domain: Domain, index: u64) -> u64 {
    let a = splitmix64(seed);
    let b = splitmix64(a ^ splitmix64(domain as u64));
    splitmix64(b ^ splitmix64(index))
}

/// Deterministic ChaCha8 stream for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, domain, index))
}

/// Two-index mix for streams keyed by e.g. `(robot, cycle)`.
pub fn mix2(seed: u64, domain: Domain, i: u64, j: u64) -> u64 {
    splitmix64(mix(seed, domain, i) ^ splitmix64(j))
}

/// Two-index variant of [`stream`].
pub fn stream2(seed: u64, domain: Domain, i: u64, j: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix2(seed, domain, i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_deterministic() {
        let mut a = stream(7, Domain::Train, 3);
        let mut b = stream(7, Domain::Train, 3);
        for _ in 0..16 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn domains_and_indices_separate_streams() {
        let a: u64 = stream(7, Domain::Train, 3).gen();
        let b: u64 = stream(7, Domain::Faulty, 3).gen();
        let c: u64 = stream(7, Domain::Train, 4).gen();
        let d: u64 = stream(8, Domain::Train, 3).gen();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
