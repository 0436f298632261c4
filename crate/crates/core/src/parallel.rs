//! Worker-pool sizing from `COMPOSITE_OPT_THREADS`.
//!
//! Parallel per-sample work always collects results in sample order and
//! reduces them sequentially, so output is identical for every thread count.

use rayon::ThreadPool;

pub const THREADS_ENV: &str = "COMPOSITE_OPT_THREADS";

/// Thread cap from the environment, `None` when unset or unparsable.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

pub fn build_pool(threads: Option<usize>) -> ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder.build().expect("failed to build worker pool")
}

/// Runs `f` inside a pool sized by `threads` (or the environment when `None`).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    build_pool(threads.or_else(threads_from_env)).install(f)
}
