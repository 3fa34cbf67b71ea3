//! Reproducible random streams.
//!
//! Streams are ChaCha12 generators keyed by a 64-bit seed and a 64-bit
//! stream id. ChaCha is counter based: distinct stream ids select disjoint
//! keystreams of the same key, so replicate `i` never depends on how many
//! other replicates were drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Generator used by every sampler in this crate.
pub type SimRng = ChaCha12Rng;

/// Independent reproducible stream `stream_id` of `master_seed`.
pub fn split_rng(master_seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream for replicate `replicate` of the experiment called `experiment`.
///
/// The experiment name is folded into the key, so two experiments run with
/// the same master seed do not share randomness.
pub fn experiment_rng(master_seed: u64, experiment: &str, replicate: u64) -> SimRng {
    split_rng(mix(master_seed, fnv1a(experiment.as_bytes())), replicate)
}

/// Runs `count` replicates of `f`, each with its own experiment stream, and
/// returns the results in replicate order regardless of scheduling.
pub fn replicates<T, F>(master_seed: u64, experiment: &str, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = experiment_rng(master_seed, experiment, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

// splitmix64 finalizer over the pair.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
