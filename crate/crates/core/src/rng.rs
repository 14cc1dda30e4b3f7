//! Seeded random streams.
//!
//! Every consumer owns its own stream; sub-streams are derived from a root seed
//! and a list of labels through a stable 64-bit FNV-1a hash, so derivations do
//! not depend on call order.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// FNV-1a (64-bit) of a byte string.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Derives a child seed from `root` and a sequence of labels.
pub fn derive_seed(root: u64, labels: &[&str]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&root.to_le_bytes());
    for label in labels {
        h.write(&(label.len() as u64).to_le_bytes());
        h.write(label.as_bytes());
    }
    h.finish()
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

pub fn derive_stream(root: u64, labels: &[&str]) -> Stream {
    stream(derive_seed(root, labels))
}
