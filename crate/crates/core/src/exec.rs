//! Data-parallel execution helpers.
//!
//! Every hot loop in the crate goes through these functions. With the
//! `parallel` feature they dispatch to rayon; without it (or inside
//! [`sequential`]) they run on the calling thread. Work is always split into
//! fixed-size chunks that do not depend on the thread count, and reductions
//! combine per-chunk partials in chunk order, so both paths produce
//! bit-identical results.

use std::cell::Cell;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with all helpers in this module forced onto the current thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// True when the helpers will fan out over the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Number of worker threads the parallel path would use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return rayon::current_num_threads();
    }
    1
}

/// Calls `f(chunk_index, chunk)` for consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Order-preserving map over `0..n`.
/// Sizes the global pool. Call once before any parallel work; later calls
/// and builds without the `parallel` feature are no-ops.
pub fn init_threads(n: usize) {
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::warn!("thread pool already initialized: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Order-preserving map over a slice.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Splits `0..n` into fixed chunks, maps each to a partial, and returns the
/// partials in chunk order.
pub fn chunk_partials<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map_range(count, |c| {
        let start = c * chunk;
        f(start..(start + chunk).min(n))
    })
}
