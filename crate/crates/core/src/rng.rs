//! Seeded random streams.
//!
//! Each stream is a ChaCha8 generator keyed by
//! `sha256(master_seed || replica || label)`, so a replica's draws depend only
//! on its own index and purpose, never on scheduling or replica count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn stream(master_seed: u64, replica: u64, label: &str) -> StreamRng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(replica.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    let seed: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(seed)
}
