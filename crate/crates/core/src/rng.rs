//! Reproducible random streams.
//!
//! Every batch of work draws from its own ChaCha stream identified by
//! `(seed, stream id)`, so results do not depend on how batches are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Rows generated per stream when a sample is split into batches.
pub const CHUNK_ROWS: usize = 1 << 14;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits `0..n` into consecutive chunks of `chunk` items, runs `f(chunk index, start, len)`
/// on each (possibly in parallel) and returns the results in chunk order.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize, usize) -> T + Sync,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    (0..count)
        .into_par_iter()
        .map(|c| {
            let start = c * chunk;
            f(c, start, chunk.min(n - start))
        })
        .collect()
}
