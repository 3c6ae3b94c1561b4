//! Data-parallel execution helpers.
//!
//! Every hot loop in the crate goes through these functions so that the
//! same code path runs either on the rayon pool or sequentially. Results are
//! identical in both modes: maps preserve order and reductions use a fixed
//! chunking that does not depend on the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

/// Fixed reduction block. Partial sums are formed per block and then added
/// in block order.
pub const REDUCE_BLOCK: usize = 1 << 12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls
    /// back to sequential execution.
    #[default]
    Parallel,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

pub fn map_range<T, F>(n: usize, par: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = par;
    (0..n).map(f).collect()
}

/// Runs `f(chunk_index, chunk)` over consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, par: Parallelism, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(c, s)| f(c, s));
        return;
    }
    let _ = par;
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(c, s)| f(c, s));
}

/// Deterministic sum of `f(i)` for `i in 0..n`.
pub fn sum_range<F>(n: usize, par: Parallelism, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let blocks = n.div_ceil(REDUCE_BLOCK);
    let partials = map_range(blocks, par, |b| {
        let start = b * REDUCE_BLOCK;
        let end = (start + REDUCE_BLOCK).min(n);
        (start..end).map(&f).sum::<f64>()
    });
    partials.into_iter().sum()
}
