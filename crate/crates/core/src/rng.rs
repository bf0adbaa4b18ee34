//! Reproducible, splittable random streams.
//!
//! A run with seed `s` is cut into fixed-size blocks of samples. Block `b`
//! draws from ChaCha8 keyed by `s` with stream id `b`, so results depend only
//! on `(seed, block)` and never on how blocks are spread over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Samples per block in every partitioned Monte Carlo loop.
pub const BLOCK_SIZE: u64 = 1 << 16;

/// The sub-stream with index `stream` of the family keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits `n` samples into `(block index, block length)` pairs.
pub fn blocks(n: u64) -> impl Iterator<Item = (u64, u64)> + Clone {
    let full = n / BLOCK_SIZE;
    let rest = n % BLOCK_SIZE;
    (0..full)
        .map(|b| (b, BLOCK_SIZE))
        .chain((rest > 0).then_some((full, rest)))
}
