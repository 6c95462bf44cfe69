//! Data-parallel execution helpers with a sequential fallback.
//!
//! The `parallel` feature (on by default) backs these with rayon. Aggregates
//! are bitwise identical for any thread count: the index range is cut into
//! fixed-size blocks, each block is folded sequentially, and block results
//! are combined in block order. Work items derive their randomness from
//! their own index, never from shared state.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
const BLOCK: u64 = 4096;

/// Fold `map(0) ⊕ map(1) ⊕ ... ⊕ map(n-1)` with the associative `reduce`,
/// always combining in index order.
pub fn indexed_fold<T, M, R>(n: u64, zero: T, map: M, reduce: R) -> T
where
    T: Send + Sync + Clone,
    M: Fn(u64) -> T + Sync + Send,
    R: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        indexed_fold_parallel(n, zero, map, reduce)
    }
    #[cfg(not(feature = "parallel"))]
    {
        indexed_fold_sequential(n, zero, map, reduce)
    }
}

/// Sequential implementation, always available (benchmark baseline).
pub fn indexed_fold_sequential<T, M, R>(n: u64, zero: T, map: M, reduce: R) -> T
where
    T: Clone,
    M: Fn(u64) -> T,
    R: Fn(T, T) -> T,
{
    let mut acc = zero;
    for i in 0..n {
        acc = reduce(acc, map(i));
    }
    acc
}

/// Rayon implementation. Blocks are folded independently and merged in
/// block order, so the result equals the sequential fold bit for bit.
#[cfg(feature = "parallel")]
pub fn indexed_fold_parallel<T, M, R>(n: u64, zero: T, map: M, reduce: R) -> T
where
    T: Send + Sync + Clone,
    M: Fn(u64) -> T + Sync + Send,
    R: Fn(T, T) -> T + Sync + Send,
{
    let blocks = n.div_ceil(BLOCK);
    let partials: Vec<T> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(n);
            let mut acc = zero.clone();
            for i in lo..hi {
                acc = reduce(acc, map(i));
            }
            acc
        })
        .collect();
    partials.into_iter().fold(zero, &reduce)
}

/// Map a slice, preserving order.
pub fn map_collect<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
