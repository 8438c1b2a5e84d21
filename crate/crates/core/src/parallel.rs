//! Worker-count control.
//!
//! Every reduction in this crate is computed per node and combined in node
//! order, so the worker count changes speed but never results.

use crate::{Result, WspError};

/// Environment variable that overrides an explicit worker count.
pub const WORKERS_ENV: &str = "WSP_WORKERS";

/// Runs `f` inside a dedicated rayon pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Err(WspError::InvalidParameter("worker count must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| WspError::InvalidParameter(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// `WSP_WORKERS` if set and valid, otherwise `requested`.
pub fn resolve_workers(requested: Option<usize>) -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| WspError::InvalidParameter(format!("{WORKERS_ENV}='{v}' is not a positive integer"))),
        Err(_) => Ok(requested.unwrap_or_else(rayon::current_num_threads)),
    }
}
