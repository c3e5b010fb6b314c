//! Reproducible random streams.
//!
//! Every draw in the crate comes from a stream keyed by
//! `(root seed, replicate, cell, salt)`, so results do not depend on how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

pub type StreamRng = Pcg64Mcg;

/// Salt for jump/increment draws of the driving basis.
pub const SALT_BASIS: u64 = 0x4241_5349;
/// Salt for subordinator (meta-time) draws.
pub const SALT_TIME: u64 = 0x5449_4d45;
/// Salt for draws that are not tied to a cell (e.g. a constant field's value).
pub const SALT_GLOBAL: u64 = 0x474c_4f42;
/// Salt for admissible-scale proposals.
pub const SALT_SCALE: u64 = 0x5343_414c;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a stream key into a 64-bit seed.
pub fn stream_seed(root: u64, replicate: u64, cell: u64, salt: u64) -> u64 {
    let mut h = splitmix64(root);
    h = splitmix64(h ^ replicate.rotate_left(17));
    h = splitmix64(h ^ cell.rotate_left(31));
    splitmix64(h ^ salt)
}

pub fn stream(root: u64, replicate: u64, cell: u64, salt: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(root, replicate, cell, salt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: u64 = stream(7, 1, 2, SALT_BASIS).random();
        let b: u64 = stream(7, 1, 2, SALT_BASIS).random();
        let c: u64 = stream(7, 2, 1, SALT_BASIS).random();
        let d: u64 = stream(7, 1, 2, SALT_TIME).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
