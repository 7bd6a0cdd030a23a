//! Order-preserving data parallelism.
//!
//! Work is split per item and collected back in index order, so results are
//! bitwise independent of the worker count. `DEPTHGUARD_THREADS` caps the
//! pool size; the default is the number of logical processors.

use std::sync::Once;

use rayon::prelude::*;

static POOL_INIT: Once = Once::new();

/// Apply the `DEPTHGUARD_THREADS` cap once, before first use of the pool.
pub fn ensure_pool() {
    POOL_INIT.call_once(|| {
        if let Ok(v) = std::env::var("DEPTHGUARD_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}

/// Parallel map with results in input order.
pub fn map_ordered<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Send + Sync) -> Vec<U> {
    ensure_pool();
    items.par_iter().map(f).collect()
}

/// Parallel fallible map; the first error wins, otherwise results are in
/// input order.
pub fn try_map_ordered<T: Sync, U: Send, E: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<U, E> + Send + Sync,
) -> Result<Vec<U>, E> {
    ensure_pool();
    items.par_iter().map(f).collect()
}

/// Parallel map over an index range, results in index order.
pub fn map_indices<U: Send>(n: usize, f: impl Fn(usize) -> U + Send + Sync) -> Vec<U> {
    ensure_pool();
    (0..n).into_par_iter().map(f).collect()
}
