//! Batch runs over seeds or independent instances.
//!
//! With the `parallel` feature (on by default) work is spread over a rayon
//! pool; without it the same calls run in order on the current thread.
//! Results always come back in input order, so batch output is
//! deterministic either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when enabled.
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
        map_sequential(items, f)
    }
}

/// Always-sequential variant, kept callable for comparison.
pub fn map_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Runs `f` once per seed.
pub fn run_seeds<U, F>(seeds: &[u64], f: F) -> Vec<U>
where
    U: Send,
    F: Fn(u64) -> U + Sync + Send,
{
    map(seeds, |s| f(*s))
}

pub fn run_seeds_sequential<U, F>(seeds: &[u64], f: F) -> Vec<U>
where
    F: Fn(u64) -> U,
{
    map_sequential(seeds, |s| f(*s))
}

/// True when this build spreads batches over threads.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
