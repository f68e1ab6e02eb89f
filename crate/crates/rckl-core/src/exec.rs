//! Data-parallel execution shim.
//!
//! With the `parallel` feature (default) the helpers fan work out over the
//! global rayon pool; without it they run sequentially with identical
//! results. Outputs are collected in input order and any reduction over the
//! collected parts must be performed sequentially by the caller, so results
//! are bitwise independent of thread scheduling.
//!
//! Benchmarks compare the two modes by installing a one-thread rayon pool
//! rather than recompiling (see `benches/parallel_vs_sequential.rs`).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when enabled, preserving order.
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
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

/// Maps `f` over `0..n`, in parallel when enabled, preserving order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = map_collect(&items, |x| x * 2);
        assert_eq!(out, (0..100).map(|x| x * 2).collect::<Vec<_>>());
        let out = map_range(50, |i| i + 1);
        assert_eq!(out, (1..=50).collect::<Vec<_>>());
    }
}
