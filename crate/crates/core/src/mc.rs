//! Seeded parallel Monte Carlo.
//!
//! Replicate `i` draws from its own ChaCha stream keyed by
//! `(master_seed, i)`, and results are collected in index order, so output
//! does not depend on the number of worker threads.

use std::sync::Once;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::McConfig;

/// Environment variable that caps the worker pool size.
pub const THREADS_ENV: &str = "PREDRISK_THREADS";

static POOL: Once = Once::new();

/// Configures the global pool from `PREDRISK_THREADS` if set. Only the first
/// call has an effect.
pub fn init_threads() {
    POOL.call_once(|| {
        if let Some(k) = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|k| *k > 0)
        {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    });
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `f` once per replicate and returns the results in replicate order.
pub fn replicate_map<T, F>(cfg: &McConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    indexed_map(cfg.master_seed, cfg.replicates, f)
}

pub fn indexed_map<T, F>(seed: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    init_threads();
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            f(i, &mut rng)
        })
        .collect()
}

/// Fallible variant; the first error in replicate order wins.
pub fn try_replicate_map<T, E, F>(cfg: &McConfig, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> Result<T, E> + Sync,
{
    replicate_map(cfg, f).into_iter().collect()
}
