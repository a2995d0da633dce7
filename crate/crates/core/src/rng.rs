//! Seed handling.
//!
//! Every random stream in the crate is a `ChaCha8Rng`. Child seeds are derived
//! from a parent seed and a list of stream labels with a SplitMix64 fold, so
//! runs are reproducible on any platform:
//!
//! ```text
//! h = splitmix64(seed)
//! for label in labels: h = splitmix64(h ^ label)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SessionRng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit label for a string stream name (FNV-1a).
pub fn label(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |h, &l| splitmix64(h ^ l))
}

pub fn rng_from(seed: u64) -> SessionRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, labels: &[u64]) -> SessionRng {
    rng_from(derive_seed(seed, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        // pinned so that a change of the fold is noticed
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn chacha_stream_is_reproducible() {
        let a: Vec<u32> = derived_rng(3, &[label("engine")]).random_iter().take(4).collect();
        let b: Vec<u32> = derived_rng(3, &[label("engine")]).random_iter().take(4).collect();
        assert_eq!(a, b);
    }
}
