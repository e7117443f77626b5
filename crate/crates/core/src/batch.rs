//! Sequential/parallel execution helpers for batch kernels.
//!
//! With the `parallel` feature (default) the `map_*` functions fan out over
//! rayon; without it they degrade to plain loops. Reductions always combine
//! partial results chunk-by-chunk in slice order with a fixed chunk length,
//! so the summation tree is independent of thread count and identical
//! between the parallel and sequential builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk length for deterministic reductions.
pub const REDUCE_CHUNK: usize = 16;

/// Order-preserving map over a slice, parallel when the feature is enabled.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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

/// Always-sequential variant of [`map`], kept for benchmark comparison.
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map fixed-size chunks to partial results and merge them in chunk order.
///
/// Returns `None` for an empty input. The merge order (left fold over chunk
/// results) is the same in both builds, so floating-point reductions are
/// reproducible bit-for-bit.
pub fn chunked_reduce<T, A, M, R>(items: &[T], map_chunk: M, reduce: R) -> Option<A>
where
    T: Sync,
    A: Send,
    M: Fn(&[T]) -> A + Sync + Send,
    R: Fn(A, A) -> A,
{
    if items.is_empty() {
        return None;
    }
    #[cfg(feature = "parallel")]
    let parts: Vec<A> = items.par_chunks(REDUCE_CHUNK).map(map_chunk).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<A> = items.chunks(REDUCE_CHUNK).map(map_chunk).collect();
    parts.into_iter().reduce(reduce)
}

/// Always-sequential variant of [`chunked_reduce`] with the same chunking.
pub fn chunked_reduce_seq<T, A, M, R>(items: &[T], map_chunk: M, reduce: R) -> Option<A>
where
    M: Fn(&[T]) -> A,
    R: Fn(A, A) -> A,
{
    if items.is_empty() {
        return None;
    }
    items.chunks(REDUCE_CHUNK).map(map_chunk).reduce(reduce)
}
