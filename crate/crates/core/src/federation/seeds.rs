//! Deterministic seed-stream derivation. Every random decision in a run is
//! drawn from a stream derived from the run seed and a tag path, so
//! skipping one consumer never shifts another.

/// Stream tags.
pub mod stream {
    pub const DATASET: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const TIMING: u64 = 5;
    /// Per `(client, round)`: the importance-evaluation batch.
    pub const IMPORTANCE_BATCH: u64 = 6;
    /// Per `(client, round)`: the local SGD batches.
    pub const TRAIN_BATCH: u64 = 7;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a tag path into an independent stream seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(base);
    for &t in tags {
        acc = splitmix64(acc ^ t.wrapping_mul(0x9e3779b97f4a7c15));
    }
    acc
}
