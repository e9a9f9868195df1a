//! Worker pools sized by `TEXLAB_THREADS`.

use crate::error::{Error, Result};

/// Worker-thread cap from `TEXLAB_THREADS`, if set to a positive integer.
pub fn env_thread_cap() -> Option<usize> {
    std::env::var("TEXLAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// A pool with `threads` workers, else `TEXLAB_THREADS`, else one per core.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = threads
        .or_else(env_thread_cap)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))
}
