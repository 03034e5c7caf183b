//! Data-parallel map helpers.
//!
//! Point sweeps and loop transports are independent work items; with the
//! `parallel` feature (default) they fan out over rayon, otherwise they run
//! sequentially.  Results come back in input order either way, so reductions
//! and reports are deterministic.  [`map_sequential`] is always available for
//! benchmarks comparing the two paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map in input order, parallel when the `parallel` feature is on.
pub fn map<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential map, regardless of features.
pub fn map_sequential<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    F: Fn(I) -> O,
{
    items.into_iter().map(f).collect()
}

/// Parallel map (rayon); only compiled with the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn map_parallel<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Send + Sync,
{
    items.into_par_iter().map(f).collect()
}
