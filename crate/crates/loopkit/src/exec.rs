//! Deterministic work splitting.
//!
//! Monte Carlo runs are divided into fixed-size chunks; chunk `i` always
//! draws from an RNG stream derived from `(master_seed, i)`, and chunk
//! results are reduced in index order. Output is therefore bit-identical
//! whether chunks run on one thread or many, and with or without the
//! `parallel` feature.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default number of samples handled per chunk.
pub const CHUNK: usize = 4096;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for a numbered stream of a master seed.
///
/// The 256-bit ChaCha key is filled from a SplitMix64 sequence seeded by
/// `master ^ (stream + 1)`, so distinct streams get unrelated keys.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha12Rng {
    let mut state = master ^ (stream.wrapping_add(1)).wrapping_mul(0xa076_1d64_78bd_642f);
    let mut seed = [0u8; 32];
    for word in seed.chunks_exact_mut(8) {
        word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}

/// Map a chunk-index function over `0..n_chunks`, in parallel when the
/// `parallel` feature is enabled, preserving index order in the result.
pub fn map_chunks<T, F>(n_chunks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n_chunks).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_chunks).map(f).collect()
    }
}

/// Sequential variant of [`map_chunks`], available in every build so that
/// benchmarks can compare both code paths.
pub fn map_chunks_serial<T, F>(n_chunks: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n_chunks).map(f).collect()
}

/// Chunk sizes for a total of `n` samples: CHUNK-sized pieces plus a tail.
pub fn chunk_sizes(n: usize) -> Vec<usize> {
    let full = n / CHUNK;
    let tail = n % CHUNK;
    let mut sizes = vec![CHUNK; full];
    if tail > 0 {
        sizes.push(tail);
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let mut a1 = stream_rng(42, 0);
        let mut a2 = stream_rng(42, 0);
        let mut b = stream_rng(42, 1);
        let x1 = a1.next_u64();
        assert_eq!(x1, a2.next_u64());
        assert_ne!(x1, b.next_u64());
    }

    #[test]
    fn parallel_and_serial_agree() {
        let par = map_chunks(17, |i| {
            let mut rng = stream_rng(7, i as u64);
            rng.next_u64()
        });
        let ser = map_chunks_serial(17, |i| {
            let mut rng = stream_rng(7, i as u64);
            rng.next_u64()
        });
        assert_eq!(par, ser);
    }
}
