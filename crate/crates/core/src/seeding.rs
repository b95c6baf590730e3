//! Named sub-stream seed derivation: one run seed drives every randomized
//! component (downsampling, bootstrap, splits) through independent,
//! reproducible streams.

use sha2::{Digest, Sha256};

pub fn sub_seed(seed: u64, stream: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stream.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
