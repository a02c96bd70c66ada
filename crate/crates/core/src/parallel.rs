//! Index-parallel helpers. With the `parallel` feature the closures run on the
//! rayon pool; without it they run in order on the calling thread. Results are
//! always returned in index order, so outputs do not depend on scheduling.

use crate::error::{Error, Result};

pub(crate) fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Like [`map_indices`] but fallible; the reported error is the one with the
/// lowest index.
pub(crate) fn try_map_indices<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indices(n, f).into_iter().collect()
}

/// Maximum of a nonnegative quantity over `0..n` (0 for an empty range).
pub(crate) fn max_over<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indices(n, f).into_iter().fold(0.0, f64::max)
}

/// Size the global worker pool from `FLOQUET_HOLONOMY_THREADS` (unset or 0
/// means one worker per core). A no-op in sequential builds.
pub fn init_thread_pool_from_env() -> Result<usize> {
    let requested = match std::env::var("FLOQUET_HOLONOMY_THREADS") {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("FLOQUET_HOLONOMY_THREADS={s:?} is not an integer")))?,
        _ => 0,
    };
    #[cfg(feature = "parallel")]
    {
        if requested > 0 {
            // keeps an already installed global pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(requested).build_global();
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        Ok(1)
    }
}
