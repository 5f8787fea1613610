//! Seed derivation.
//!
//! Every stochastic computation takes a `u64` seed. Independent substreams
//! (per test, per center, per shard) are derived by hashing the parent seed
//! together with a label, so adding or reordering consumers never shifts the
//! stream another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Keyed hash of `(seed, label)` truncated to 64 bits.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"forensics-substream-v1");
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// Substream keyed by an integer index (shards, replications).
pub fn derive_seed_indexed(seed: u64, label: &str, index: u64) -> u64 {
    derive_seed(seed, &format!("{label}#{index}"))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, label: &str) -> ChaCha8Rng {
    rng_from_seed(derive_seed(seed, label))
}

/// Replicates per parallel shard in [`count_sharded`].
pub const SHARD_SIZE: u64 = 1024;

/// Counts replicates for which `trial` returns true.
///
/// Replicates are split into shards of [`SHARD_SIZE`], each with its own
/// substream `label#shard`, so the count depends only on `(seed, reps)` and
/// not on the thread count. `init` builds per-shard scratch state.
pub fn count_sharded<S, I, F>(reps: u64, seed: u64, label: &str, init: I, trial: F) -> u64
where
    I: Fn() -> S + Sync,
    F: Fn(&mut ChaCha8Rng, &mut S) -> bool + Sync,
{
    use rayon::prelude::*;
    let shards = reps.div_ceil(SHARD_SIZE);
    (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = rng_from_seed(derive_seed_indexed(seed, label, shard));
            let mut state = init();
            let len = SHARD_SIZE.min(reps - shard * SHARD_SIZE);
            (0..len).filter(|_| trial(&mut rng, &mut state)).count() as u64
        })
        .sum()
}
