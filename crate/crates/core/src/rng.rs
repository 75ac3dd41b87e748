//! Seed derivation and stable hashing.
//!
//! Every random stream in an episode is derived from the campaign's master
//! seed, the episode index and a stream label:
//! `seed = SHA-256(master_le || index_le || label)`. The 32-byte digest seeds a
//! ChaCha8 generator, which produces the same sequence on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used for all simulation randomness.
pub type SimRng = ChaCha8Rng;

pub const STREAM_EPISODE: &str = "episode";
pub const STREAM_EXEC: &str = "exec";
pub const STREAM_PERTURB: &str = "perturb";
pub const STREAM_MONITOR: &str = "monitor";

fn digest(master: u64, index: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(index.to_le_bytes());
    hasher.update(label.as_bytes());
    let out = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&out[..]);
    seed
}

/// Generator for stream `label` of episode `index` under `master`.
pub fn stream(master: u64, index: u64, label: &str) -> SimRng {
    SimRng::from_seed(digest(master, index, label))
}

/// A derived 64-bit seed, used where a plain integer seed is stored (episode specs).
pub fn derive_seed(master: u64, index: u64, label: &str) -> u64 {
    let d = digest(master, index, label);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// First 8 bytes (big-endian) of the SHA-256 of `text`.
pub fn stable_hash(text: &str) -> u64 {
    let out = Sha256::digest(text.as_bytes());
    u64::from_be_bytes(out[..8].try_into().expect("8 bytes"))
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}
