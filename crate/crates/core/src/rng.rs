//! Deterministic random substreams.
//!
//! Every Monte Carlo term draws from its own ChaCha stream whose seed is a
//! pure function of the run seed and a small tuple of term identifiers, so
//! results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::stats::Moments;

pub type Stream = ChaCha8Rng;

/// Samples per parallel chunk. Chunk boundaries are fixed so that the
/// reduction order never depends on the number of worker threads.
pub const CHUNK: usize = 1 << 14;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of identifiers into a new 64-bit seed.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(seed), |acc, &id| splitmix(acc ^ splitmix(id.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn stream(seed: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Number of chunks needed to cover `n` samples.
pub fn chunks(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

/// Sample range `[start, end)` covered by chunk `c`.
pub fn chunk_range(n: usize, c: usize) -> std::ops::Range<usize> {
    let start = c * CHUNK;
    start..(start + CHUNK).min(n)
}

/// Runs `n` scalar samples in fixed chunks, each chunk on its own substream
/// `path ++ [chunk]`, and folds the per-chunk moments in chunk order.
///
/// `init` builds per-chunk scratch state; `sample` draws one value.
pub fn chunked_moments<S, I, F>(n: usize, seed: u64, path: &[u64], init: I, sample: F) -> Moments
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, &mut Stream) -> f64 + Sync,
{
    let parts: Vec<Moments> = (0..chunks(n))
        .into_par_iter()
        .map(|c| {
            let mut p = path.to_vec();
            p.push(c as u64);
            let mut rng = stream(seed, &p);
            let mut state = init();
            let mut m = Moments::default();
            for _ in chunk_range(n, c) {
                m.push(sample(&mut state, &mut rng));
            }
            m
        })
        .collect();
    parts.into_iter().fold(Moments::default(), Moments::merge)
}
