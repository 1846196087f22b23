//! Named, independent random streams derived from one scenario seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Stream for `domain` under master `seed`. Distinct domains give
/// statistically independent streams; the mapping is stable across runs and
/// platforms.
pub fn stream(seed: u64, domain: &str) -> SimRng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(domain.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Seed for replica `index` of a batch started from `seed`.
pub fn replica_seed(seed: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"replica");
    h.update(seed.to_be_bytes());
    h.update(index.to_be_bytes());
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}
