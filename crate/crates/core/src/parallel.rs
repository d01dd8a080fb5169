//! Worker-pool sizing. `DETKIT_THREADS` caps the number of workers.

pub const THREADS_ENV: &str = "DETKIT_THREADS";

pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

/// Runs `f` on a pool honouring [`THREADS_ENV`], or on the global pool.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match thread_cap().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}
