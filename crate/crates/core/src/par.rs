//! Deterministic data-parallel helpers.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it the same code runs sequentially. Reductions always split the
//! index range into fixed-size chunks and combine partial results with a
//! pairwise tree in index order, so results are bitwise identical regardless
//! of the number of worker threads.

use std::ops::Range;

/// Chunk length used by [`chunked_reduce`] callers that have no better choice.
pub const DEFAULT_CHUNK: usize = 64;

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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

/// Maps `f` over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}

/// Pairwise reduction in a fixed shape: `((a0+a1)+(a2+a3))+...`.
pub fn tree_reduce<T, R>(mut items: Vec<T>, reduce: R) -> Option<T>
where
    R: Fn(T, T) -> T,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(reduce(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Splits `0..n` into chunks of `chunk` indices, evaluates `f` on each chunk
/// (in parallel when enabled) and tree-reduces the partials.
pub fn chunked_reduce<T, F, R>(n: usize, chunk: usize, f: F, reduce: R) -> Option<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
    R: Fn(T, T) -> T,
{
    let chunk = chunk.max(1);
    let chunks = n.div_ceil(chunk);
    let partials = map_indexed(chunks, |c| f(c * chunk..((c + 1) * chunk).min(n)));
    tree_reduce(partials, reduce)
}

/// Number of worker threads the parallel helpers will use.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
