//! Deterministic named substreams derived from one master seed.
//!
//! Every stochastic component draws from its own substream so that results
//! are bit-identical for a given (seed, replications) regardless of
//! scheduling, and so the coupled simulator can switch between shared and
//! independent streams without disturbing determinism.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// RNG for the given (master seed, stream name, replication index).
pub fn substream(seed: u64, stream: &str, rep: u64) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(stream.as_bytes());
    hasher.update([0u8]);
    hasher.update(rep.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}
