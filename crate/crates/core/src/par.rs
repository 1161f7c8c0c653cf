//! Data-parallel map with a sequential fallback.
//!
//! All bulk work in the crate (per-trajectory generation, per-sample batch
//! gradients, per-candidate planner rollouts) is an independent map followed
//! by an *ordered* reduction. `map_collect` runs the map on rayon when the
//! `parallel` feature is enabled and serially otherwise; because results come
//! back in input order and reductions happen outside in a fixed order, the
//! two paths produce bit-identical numbers.
//!
//! `map_collect_seq` is always available so benchmarks can compare the two
//! paths in a single build.

/// Sequential reference implementation.
pub fn map_collect_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    items.iter().map(f).collect()
}

/// Parallel map preserving input order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Sequential fallback when built without rayon.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_collect_seq(items, f)
}

/// Parallel map over an index range, preserving order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map_collect(&idx, |i| f(*i))
}
